"""Model-input feature matrices.

Column layout produced by :func:`assemble_features` (always in this order):

1. base: ``n_tx, n_unredeemed, total_received, total_sent, final_balance``
2. derived: ``log1p_total_received, log1p_total_sent, log1p_final_balance,
   activity_intensity``
3. transfer features (when a transfer log is given):
   ``freq_mean, freq_max, freq_var, amt_mean, amt_median, amt_var,
   frac_large, frac_small, sent_count, recv_count``
4. graph features (when node scores are given):
   ``degree, closeness, betweenness``

Wallets absent from the transfer log or graph get 0 in those columns.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ingest import TransferRecord, WalletRecord

BASE_COLUMNS = ("n_tx", "n_unredeemed", "total_received", "total_sent", "final_balance")
DERIVED_COLUMNS = (
    "log1p_total_received",
    "log1p_total_sent",
    "log1p_final_balance",
    "activity_intensity",
)
TRANSFER_COLUMNS = (
    "freq_mean",
    "freq_max",
    "freq_var",
    "amt_mean",
    "amt_median",
    "amt_var",
    "frac_large",
    "frac_small",
    "sent_count",
    "recv_count",
)
GRAPH_COLUMNS = ("degree", "closeness", "betweenness")

WEEK = 7 * 24 * 3600


@dataclass(frozen=True)
class FeatureConfig:
    window: int = WEEK
    large_pct: float = 90.0
    small_pct: float = 10.0


@dataclass(frozen=True)
class FeatureMatrix:
    row_ids: tuple[str, ...]
    column_names: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            values = values.reshape(len(self.row_ids), len(self.column_names))
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.row_ids), len(self.column_names)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.row_ids)} rows x {len(self.column_names)} columns"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("feature matrix contains NaN or infinite entries")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (len(self.row_ids),):
                raise ValueError("labels do not align with rows")
            if not np.all((labels == 0) | (labels == 1)):
                raise ValueError("labels must be binary")
            object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(
            tuple(self.row_ids[i] for i in rows),
            self.column_names,
            self.values[rows],
            None if self.labels is None else self.labels[rows],
        )

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.row_ids, self.column_names, values, self.labels)


@dataclass(frozen=True)
class StandardizerStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizerStats":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def activity_intensity(n_tx, total_received):
    """Transactions per satoshi received, with 1 added to the denominator."""
    if np.ndim(n_tx) == 0 and np.ndim(total_received) == 0:
        return n_tx / (total_received + 1.0)
    return np.asarray(n_tx, dtype=float) / (np.asarray(total_received, dtype=float) + 1.0)


def rank_descending(values) -> np.ndarray:
    """Rank 1 for the largest value; tied values share their average rank."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        return np.zeros(0)
    order = np.argsort(-x, kind="stable")
    sorted_x = x[order]
    ranks = np.empty(n)
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and sorted_x[stop] == sorted_x[start]:
            stop += 1
        # positions start..stop-1 hold ranks start+1..stop
        ranks[order[start:stop]] = (start + 1 + stop) / 2.0
        start = stop
    return ranks


def _involving(transfers: Sequence[TransferRecord], wallet: str) -> list[TransferRecord]:
    return [t for t in transfers if t.src == wallet or t.dst == wallet]


def _window_counts(times: Sequence[int], window: int) -> np.ndarray:
    if not len(times):
        return np.zeros(0, dtype=np.int64)
    t = np.asarray(times, dtype=np.int64)
    slots = (t - t.min()) // window
    return np.bincount(slots)


def transaction_frequency(
    transfers: Sequence[TransferRecord], wallet: str, window: int = WEEK
) -> np.ndarray:
    """Per-window event counts, windows tiled from the wallet's first event."""
    if window <= 0:
        raise ValueError("window must be positive")
    return _window_counts([t.timestamp for t in _involving(transfers, wallet)], window)


def global_cutoffs(values, large_pct: float, small_pct: float) -> tuple[float, float]:
    """Percentile cutoffs with linear interpolation between order statistics
    (position ``p/100 * (n - 1)``, both ends inclusive)."""
    if not 0 <= small_pct < large_pct <= 100:
        raise ValueError("need 0 <= small_pct < large_pct <= 100")
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0, 0.0
    large, small = np.percentile(v, [large_pct, small_pct], method="linear")
    return float(large), float(small)


def _profile(values: Sequence[int], sent: int, recv: int, large: float, small: float) -> dict:
    if not len(values):
        return dict.fromkeys(
            ("mean", "median", "variance", "frac_large", "frac_small", "sent_count", "recv_count"),
            0.0,
        )
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    return {
        "mean": mean,
        "median": float(np.median(v)),
        "variance": float(np.mean((v - mean) ** 2)),
        "frac_large": float(np.mean(v > large)),
        "frac_small": float(np.mean(v < small)),
        "sent_count": float(sent),
        "recv_count": float(recv),
    }


def amount_profile(
    transfers: Sequence[TransferRecord],
    wallet: str,
    large_pct: float = 90.0,
    small_pct: float = 10.0,
) -> dict:
    """Value statistics of one wallet's transfers.

    ``frac_large``/``frac_small`` compare against percentiles of *all* transfer
    values in ``transfers``, not just this wallet's. A self-transfer counts once
    in the value statistics and once in each of ``sent_count``/``recv_count``.
    """
    large, small = global_cutoffs([t.value for t in transfers], large_pct, small_pct)
    mine = _involving(transfers, wallet)
    sent = sum(1 for t in mine if t.src == wallet)
    recv = sum(1 for t in mine if t.dst == wallet)
    return _profile([t.value for t in mine], sent, recv, large, small)


def fit_standardizer(matrix: FeatureMatrix | np.ndarray) -> StandardizerStats:
    x = matrix.values if isinstance(matrix, FeatureMatrix) else np.asarray(matrix, float)
    if x.shape[0] < 1:
        raise ValueError("cannot fit a standardizer on zero rows")
    mean = x.mean(axis=0)
    std = np.sqrt(np.mean((x - mean) ** 2, axis=0))
    return StandardizerStats(mean, std)


def apply_standardizer(matrix: FeatureMatrix, stats: StandardizerStats) -> FeatureMatrix:
    x = matrix.values
    if x.shape[1] != stats.mean.shape[0]:
        raise ValueError(
            f"column mismatch: matrix has {x.shape[1]}, standardizer has {stats.mean.shape[0]}"
        )
    safe = np.where(stats.std > 0, stats.std, 1.0)
    z = np.where(stats.std > 0, (x - stats.mean) / safe, 0.0)
    return matrix.with_values(z)


def _transfer_block(records, transfers, config: FeatureConfig) -> np.ndarray:
    large, small = global_cutoffs([t.value for t in transfers], config.large_pct, config.small_pct)
    times: dict[str, list[int]] = defaultdict(list)
    values: dict[str, list[int]] = defaultdict(list)
    sent: dict[str, int] = defaultdict(int)
    recv: dict[str, int] = defaultdict(int)
    for t in transfers:
        times[t.src].append(t.timestamp)
        values[t.src].append(t.value)
        sent[t.src] += 1
        recv[t.dst] += 1
        if t.dst != t.src:
            times[t.dst].append(t.timestamp)
            values[t.dst].append(t.value)
    block = np.zeros((len(records), len(TRANSFER_COLUMNS)))
    for i, rec in enumerate(records):
        a = rec.address
        counts = _window_counts(times.get(a, ()), config.window)
        if counts.size:
            c = counts.astype(float)
            freq = [c.mean(), c.max(), float(np.mean((c - c.mean()) ** 2))]
        else:
            freq = [0.0, 0.0, 0.0]
        p = _profile(values.get(a, ()), sent.get(a, 0), recv.get(a, 0), large, small)
        block[i] = freq + [p["mean"], p["median"], p["variance"], p["frac_large"],
                           p["frac_small"], p["sent_count"], p["recv_count"]]
    return block


def assemble_features(
    records: Sequence[WalletRecord],
    transfers: Sequence[TransferRecord] | None = None,
    node_scores: Mapping[str, Mapping[str, float]] | None = None,
    config: FeatureConfig | None = None,
) -> FeatureMatrix:
    """Build the feature matrix in the documented column order.

    ``node_scores`` maps each of ``degree``/``closeness``/``betweenness`` to an
    address -> score mapping.
    """
    config = config or FeatureConfig()
    addresses = [r.address for r in records]
    if len(set(addresses)) != len(addresses):
        seen, dups = set(), []
        for a in addresses:
            if a in seen:
                dups.append(a)
            seen.add(a)
        raise ValueError(f"duplicate address in records: {dups[0]}")
    base = np.array([[getattr(r, c) for c in BASE_COLUMNS] for r in records], dtype=float)
    base = base.reshape(len(records), len(BASE_COLUMNS))
    derived = np.column_stack([
        np.log1p(base[:, 2]),
        np.log1p(base[:, 3]),
        np.log1p(base[:, 4]),
        activity_intensity(base[:, 0], base[:, 2]),
    ]) if records else np.zeros((0, len(DERIVED_COLUMNS)))
    blocks = [base, derived]
    names = list(BASE_COLUMNS + DERIVED_COLUMNS)
    if transfers is not None:
        blocks.append(_transfer_block(records, transfers, config))
        names += TRANSFER_COLUMNS
    if node_scores is not None:
        graph = np.array(
            [[float(node_scores[k].get(a, 0.0)) for k in GRAPH_COLUMNS] for a in addresses]
        ).reshape(len(records), len(GRAPH_COLUMNS))
        blocks.append(graph)
        names += GRAPH_COLUMNS
    labels = None
    if records and all(r.label is not None for r in records):
        labels = np.array([r.label for r in records], dtype=np.int64)
    return FeatureMatrix(tuple(addresses), tuple(names), np.hstack(blocks), labels)


def write_feature_matrix(matrix: FeatureMatrix, path) -> tuple[Path, Path]:
    """CSV with ``address`` first and ``label`` last, plus a column manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["address", *matrix.column_names]
    if matrix.labels is not None:
        header.append("label")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, addr in enumerate(matrix.row_ids):
            row = [addr, *(repr(float(v)) for v in matrix.values[i])]
            if matrix.labels is not None:
                row.append(int(matrix.labels[i]))
            w.writerow(row)
    manifest = path.with_suffix(".columns.json")
    manifest.write_text(json.dumps({
        "columns": list(matrix.column_names),
        "has_labels": matrix.labels is not None,
        "rows": len(matrix.row_ids),
    }, indent=2) + "\n", encoding="utf-8")
    return path, manifest


def read_feature_matrix(path) -> FeatureMatrix:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_labels = header[-1] == "label"
        names = tuple(header[1:-1] if has_labels else header[1:])
        ids, rows, labels = [], [], []
        for row in reader:
            ids.append(row[0])
            if has_labels:
                rows.append([float(v) for v in row[1:-1]])
                labels.append(int(row[-1]))
            else:
                rows.append([float(v) for v in row[1:]])
    values = np.array(rows, dtype=float).reshape(len(ids), len(names))
    return FeatureMatrix(tuple(ids), names, values, np.array(labels) if has_labels else None)
