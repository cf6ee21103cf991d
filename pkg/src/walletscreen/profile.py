"""Exploratory statistics over wallet summaries, emitted as plot-ready CSV.

Variance is the population (divide-by-n) variance everywhere. Chart rendering
is deliberately absent: every function returns numbers, and
:func:`emit_plot_data` writes them in a fixed, documented layout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import singledispatch
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ingest import NUMERIC_FIELDS, WalletRecord

SKEW_THRESHOLD = 2.0


@dataclass(frozen=True)
class CorrelationMatrix:
    columns: tuple[str, ...]
    r: np.ndarray
    # columns whose variance is zero; their off-diagonal entries are 0 by convention
    degenerate: tuple[str, ...] = ()


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r: float
    n: int


@dataclass(frozen=True)
class RankedList:
    field: str
    entries: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class Histogram:
    column: str
    edges: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True)
class ScatterData:
    """Per-wallet (total_received, total_sent, n_tx, final_balance) tuples."""

    rows: tuple[tuple[int, int, int, int], ...] = field(default_factory=tuple)

    @classmethod
    def from_records(cls, records: Sequence[WalletRecord]) -> "ScatterData":
        return cls(tuple(
            (r.total_received, r.total_sent, r.n_tx, r.final_balance) for r in records
        ))


def _vector(column) -> np.ndarray:
    x = np.asarray(column, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a one-dimensional column")
    return x


def summary_stats(column) -> dict[str, float]:
    x = _vector(column)
    if x.size == 0:
        raise ValueError("summary_stats of an empty column")
    mean = float(x.mean())
    var = float(np.mean((x - mean) ** 2))
    sd = math.sqrt(var)
    skew = float(np.mean((x - mean) ** 3)) / sd**3 if sd > 0 else 0.0
    return {
        "mean": mean,
        "median": float(np.median(x)),
        "variance": var,
        "skewness": skew,
        "min": float(x.min()),
        "max": float(x.max()),
    }


def is_highly_skewed(column, threshold: float = SKEW_THRESHOLD) -> bool:
    return abs(summary_stats(column)["skewness"]) > threshold


def correlation_matrix(columns: Mapping[str, Sequence[float]]) -> CorrelationMatrix:
    """Pairwise Pearson correlation of named, equal-length columns."""
    names = tuple(columns)
    data = [_vector(columns[n]) for n in names]
    lengths = {len(c) for c in data}
    if len(lengths) > 1:
        raise ValueError(f"ragged columns: lengths {sorted(lengths)}")
    if data and data[0].size < 2:
        raise ValueError("correlation needs at least two rows")
    k = len(names)
    if k == 0:
        return CorrelationMatrix((), np.zeros((0, 0)))
    centered = np.vstack([c - c.mean() for c in data])
    ss = np.einsum("ij,ij->i", centered, centered)
    degenerate = ss == 0
    r = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            if degenerate[i] or degenerate[j]:
                v = 0.0
            else:
                v = float(centered[i] @ centered[j]) / math.sqrt(ss[i] * ss[j])
                v = min(1.0, max(-1.0, v))
            r[i, j] = r[j, i] = v
    return CorrelationMatrix(names, r, tuple(n for n, d in zip(names, degenerate) if d))


def top_k_by_field(records: Sequence[WalletRecord], field: str, k: int) -> RankedList:
    if field not in NUMERIC_FIELDS:
        raise ValueError(f"unknown field {field!r}; expected one of {NUMERIC_FIELDS}")
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(((r.address, getattr(r, field)) for r in records),
                    key=lambda av: (-av[1], av[0]))
    return RankedList(field, tuple(ranked[:k]))


def log1p_column(column) -> np.ndarray:
    x = _vector(column)
    if np.any(x < 0):
        raise ValueError("log1p_column requires nonnegative values")
    return np.log1p(x)


def linear_fit(x, y) -> FitResult:
    """Ordinary least squares of ``y`` on ``x`` in closed form."""
    xv, yv = _vector(x), _vector(y)
    if xv.size != yv.size:
        raise ValueError("x and y differ in length")
    if xv.size < 2:
        raise ValueError("linear_fit needs at least two points")
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sxx = float(dx @ dx)
    if sxx == 0:
        raise ValueError("degenerate regressor: x has zero variance")
    sxy = float(dx @ dy)
    syy = float(dy @ dy)
    slope = sxy / sxx
    intercept = float(yv.mean()) - slope * float(xv.mean())
    r = 0.0 if syy == 0 else max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))
    return FitResult(slope, intercept, r, int(xv.size))


def histogram(column, bins: int, name: str = "") -> Histogram:
    """Equal-width bins over [min, max]; bins are [lo, hi) except the last, which
    is closed. A constant column spans [v, v + 1]."""
    x = _vector(column)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if x.size == 0:
        raise ValueError("histogram of an empty column")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    idx = np.clip(idx, 0, bins - 1)
    # floor() can misplace values sitting exactly on an interior edge
    idx[(idx > 0) & (x < edges[idx])] -= 1
    idx[(idx < bins - 1) & (x >= edges[np.minimum(idx + 1, bins)])] += 1
    counts = np.bincount(idx, minlength=bins)
    return Histogram(name, edges, counts)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


@singledispatch
def emit_plot_data(artifact, path) -> Path:
    """Write one plot-data artifact as CSV and return the path written."""
    raise TypeError(f"no plot-data layout for {type(artifact).__name__}")


@emit_plot_data.register
def _(artifact: CorrelationMatrix, path) -> Path:
    rows = ([name, *artifact.r[i]] for i, name in enumerate(artifact.columns))
    return write_csv(path, ["column", *artifact.columns], rows)


@emit_plot_data.register
def _(artifact: RankedList, path) -> Path:
    rows = ([i + 1, a, v] for i, (a, v) in enumerate(artifact.entries))
    return write_csv(path, ["rank", "address", artifact.field], rows)


@emit_plot_data.register
def _(artifact: Histogram, path) -> Path:
    e = artifact.edges
    rows = ([e[i], e[i + 1], int(c)] for i, c in enumerate(artifact.counts))
    return write_csv(path, ["edge_lo", "edge_hi", "count"], rows)


@emit_plot_data.register
def _(artifact: FitResult, path) -> Path:
    return write_csv(path, ["slope", "intercept", "r", "n"],
                  [[artifact.slope, artifact.intercept, artifact.r, artifact.n]])


@emit_plot_data.register
def _(artifact: ScatterData, path) -> Path:
    return write_csv(path, ["total_received", "total_sent", "n_tx", "final_balance"],
                  artifact.rows)
