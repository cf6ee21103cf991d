"""Confusion-matrix metrics, classification reports, ROC-AUC, stratified
splitting, cross-validation and the F1-ranked model comparison.

Class 1 (suspicious) is the positive class. Any metric whose denominator is
zero is reported as 0.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .features import FeatureMatrix, apply_standardizer, fit_standardizer
from .learn import ForestConfig, ModelConfig, decision_scores, predict_labels, train_model
from .seeding import rng_for

METRICS = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def transposed(self) -> "ConfusionMatrix":
        """The same counts seen with class 0 as the positive class."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def _binary(v, name) -> np.ndarray:
    a = np.asarray(v).astype(np.int64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError(f"{name} must be binary")
    return a


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t = _binary(y_true, "y_true")
    p = _binary(y_pred, "y_pred")
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true vs {p.size} predicted")
    if t.size == 0:
        raise ValueError("confusion matrix of empty vectors")
    return ConfusionMatrix(
        tp=int(np.sum((t == 1) & (p == 1))),
        fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))),
        tn=int(np.sum((t == 0) & (p == 0))),
    )


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def metrics_from_confusion(cm: ConfusionMatrix) -> dict[str, float]:
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    precision = _div(cm.tp, cm.tp + cm.fp)
    recall = _div(cm.tp, cm.tp + cm.fn)
    return {
        "accuracy": (cm.tp + cm.tn) / cm.total,
        "precision": precision,
        "recall": recall,
        "f1": _div(2 * precision * recall, precision + recall),
    }


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "support": self.support}


@dataclass(frozen=True)
class ClassReport:
    confusion: ConfusionMatrix
    class0: ClassMetrics
    class1: ClassMetrics
    accuracy: float
    macro: ClassMetrics
    weighted: ClassMetrics

    def to_dict(self, model: str | None = None, auc: float | None = None) -> dict:
        d = {
            "model": model,
            "confusion": self.confusion.to_dict(),
            "class0": self.class0.to_dict(),
            "class1": self.class1.to_dict(),
            "accuracy": self.accuracy,
            "macro": self.macro.to_dict(),
            "weighted": self.weighted.to_dict(),
            "auc": auc,
        }
        return d

    def format(self, digits: int = 2) -> str:
        """Plain-text table: per-class rows, accuracy, macro and weighted averages."""
        n = self.confusion.total
        w = f"{{:>10.{digits}f}}"
        lines = [f"{'':>14}{'precision':>10}{'recall':>10}{'f1-score':>10}{'support':>10}"]
        for name, m in (("0", self.class0), ("1", self.class1)):
            lines.append(f"{name:>14}" + w.format(m.precision) + w.format(m.recall)
                         + w.format(m.f1) + f"{m.support:>10d}")
        lines.append(f"{'accuracy':>14}{'':>20}" + w.format(self.accuracy) + f"{n:>10d}")
        for name, m in (("macro avg", self.macro), ("weighted avg", self.weighted)):
            lines.append(f"{name:>14}" + w.format(m.precision) + w.format(m.recall)
                         + w.format(m.f1) + f"{n:>10d}")
        return "\n".join(lines)


def report_from_confusion(cm: ConfusionMatrix) -> ClassReport:
    m1 = metrics_from_confusion(cm)
    m0 = metrics_from_confusion(cm.transposed())
    s1, s0 = cm.tp + cm.fn, cm.tn + cm.fp
    c1 = ClassMetrics(m1["precision"], m1["recall"], m1["f1"], s1)
    c0 = ClassMetrics(m0["precision"], m0["recall"], m0["f1"], s0)
    n = cm.total
    macro = ClassMetrics(*((getattr(c0, k) + getattr(c1, k)) / 2 for k in ("precision", "recall", "f1")), n)
    weighted = ClassMetrics(
        *((s0 * getattr(c0, k) + s1 * getattr(c1, k)) / n for k in ("precision", "recall", "f1")), n
    )
    return ClassReport(cm, c0, c1, m1["accuracy"], macro, weighted)


def classification_report(y_true, y_pred) -> ClassReport:
    return report_from_confusion(confusion(y_true, y_pred))


def roc_auc(y_true, scores) -> float:
    """Probability that a random positive outscores a random negative, ties
    counting one half (the Mann-Whitney statistic)."""
    y = _binary(y_true, "y_true")
    s = np.asarray(scores, dtype=float)
    if s.shape != y.shape:
        raise ValueError("y_true and scores differ in length")
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("roc_auc needs both classes in y_true")
    order = np.argsort(s, kind="stable")
    ss = s[order]
    # twice the midrank is an integer, so the numerator below is exact
    ranks2 = np.empty(y.size, dtype=np.int64)
    start = 0
    while start < y.size:
        stop = start + 1
        while stop < y.size and ss[stop] == ss[start]:
            stop += 1
        ranks2[order[start:stop]] = start + 1 + stop
        start = stop
    u2 = int(ranks2[y == 1].sum()) - n1 * (n1 + 1)
    return (u2 / 2) / (n1 * n0)


# -- splitting -----------------------------------------------------------------


def _round_half_up(q: Fraction) -> int:
    return math.floor(q + Fraction(1, 2))


def _allocate(quotas: dict[int, Fraction], total: int, prefer: dict[int, int]) -> dict[int, int]:
    """Integer counts within floor/ceil of each quota (at least 1), summing to
    ``total`` where the floors and ceilings allow."""
    alloc = {c: max(1, math.floor(q)) for c, q in quotas.items()}
    while sum(alloc.values()) < total:
        open_ = [c for c, q in quotas.items() if alloc[c] < math.ceil(q)]
        if not open_:
            break
        c = max(open_, key=lambda c: (quotas[c] - alloc[c], -prefer.get(c, 0), -c))
        alloc[c] += 1
    return alloc


def split_indices(labels, ratios=(0.70, 0.15, 0.15), seed: int = 0):
    """Stratified train/validation/test split.

    Validation and test sizes are the rounded (half-up) quotas of ``n``; each
    class contributes a floor/ceil share of its own quota, at least one row,
    and the training set takes the remainder.
    """
    y = _binary(labels, "labels")
    n = y.size
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError("ratios must be three nonnegative numbers")
    fr = [Fraction(r).limit_denominator(10**6) for r in ratios]
    if abs(sum(fr) - 1) > Fraction(1, 10**9):
        raise ValueError("ratios must sum to 1")
    if n < 10:
        raise ValueError("split needs at least 10 rows")
    classes = {c: np.flatnonzero(y == c) for c in (0, 1)}
    for c, members in classes.items():
        if members.size < 3:
            raise ValueError(f"unsplittable stratum: class {c} has {members.size} members")
    sizes = {c: m.size for c, m in classes.items()}
    val = _allocate({c: fr[1] * s for c, s in sizes.items()}, _round_half_up(fr[1] * n), {})
    test = _allocate({c: fr[2] * s for c, s in sizes.items()}, _round_half_up(fr[2] * n), val)
    parts = ([], [], [])
    for c in (0, 1):
        members = rng_for(seed, "split", c).permutation(classes[c])
        v, t = val[c], test[c]
        parts[1].append(members[:v])
        parts[2].append(members[v:v + t])
        parts[0].append(members[v + t:])
    return tuple(np.sort(np.concatenate(p)) for p in parts)


def split_70_15_15(n: int, labels, seed: int = 0):
    y = np.asarray(labels)
    if y.size != n:
        raise ValueError(f"n={n} but {y.size} labels given")
    return split_indices(y, (0.70, 0.15, 0.15), seed)


def stratified_kfold(labels, k: int, seed: int = 0) -> list[np.ndarray]:
    """``k`` disjoint held-out folds covering every index.

    Each class is shuffled and dealt round-robin; the dealing for class 1
    starts where class 0 left off, which keeps fold sizes within one of each
    other as well.
    """
    y = _binary(labels, "labels")
    if k < 2:
        raise ValueError("k must be >= 2")
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in (0, 1):
        members = np.flatnonzero(y == c)
        if members.size < k:
            raise ValueError(f"class {c} has {members.size} members, fewer than k={k}")
        members = rng_for(seed, "kfold", c).permutation(members)
        for pos, idx in enumerate(members):
            folds[(offset + pos) % k].append(int(idx))
        offset = (offset + members.size) % k
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


@dataclass(frozen=True)
class CrossValResult:
    reports: tuple[ClassReport, ...]
    mean: dict[str, float]
    std: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "folds": [r.to_dict() for r in self.reports],
            "mean": self.mean,
            "std": self.std,
        }


def aggregate_reports(reports: Sequence[ClassReport]) -> tuple[dict, dict]:
    """Mean and population std of the class-1 metrics and accuracy."""
    mean, std = {}, {}
    for k in METRICS:
        vals = np.array([metrics_from_confusion(r.confusion)[k] for r in reports])
        mean[k] = float(vals.mean())
        std[k] = float(np.sqrt(np.mean((vals - vals.mean()) ** 2)))
    return mean, std


def cross_validate(
    X: FeatureMatrix, y, config: ModelConfig, k: int = 5, seed: int = 0, threads: int = 1
) -> CrossValResult:
    """Stratified k-fold evaluation. Models other than the forest get a
    standardizer fitted on each fold's training rows only."""
    y = _binary(y, "y")
    folds = stratified_kfold(y, k, seed)
    reports = []
    for i, held in enumerate(folds):
        train = np.setdiff1d(np.arange(y.size), held)
        Xtr, Xte = X.take(train), X.take(held)
        if not isinstance(config, ForestConfig):
            stats = fit_standardizer(Xtr)
            Xtr, Xte = apply_standardizer(Xtr, stats), apply_standardizer(Xte, stats)
        try:
            model = train_model(Xtr, y[train], config, threads=threads)
        except ValueError as exc:
            raise ValueError(f"fold {i}: {exc}") from exc
        reports.append(classification_report(y[held], predict_labels(model, Xte)))
    mean, std = aggregate_reports(reports)
    return CrossValResult(tuple(reports), mean, std)


# -- comparison ----------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    accuracy: float
    precision: float
    recall: float
    f1: float


def compare_models(results: Iterable[tuple[str, Sequence[int], Sequence[int]]]) -> list[ComparisonRow]:
    """Class-1 metrics per model, sorted by F1 descending then name ascending."""
    results = list(results)
    if not results:
        raise ValueError("compare_models needs at least one result")
    n = len(results[0][1])
    rows = []
    for name, y_true, y_pred in results:
        if len(y_true) != n or len(y_pred) != n:
            raise ValueError(f"model {name!r}: inconsistent vector lengths")
        m = metrics_from_confusion(confusion(y_true, y_pred))
        rows.append(ComparisonRow(name, m["accuracy"], m["precision"], m["recall"], m["f1"]))
    rows.sort(key=lambda r: (-r.f1, r.model))
    return rows


def format_comparison(rows: Sequence[ComparisonRow], digits: int = 6) -> str:
    width = max(len("Model"), *(len(r.model) for r in rows))
    head = f"{'Model':<{width}}  {'Accuracy':>10}{'Precision':>10}{'Recall':>10}{'F1 Score':>10}"
    body = [
        f"{r.model:<{width}}  " + "".join(f"{v:>10.{digits}f}" for v in
                                          (r.accuracy, r.precision, r.recall, r.f1))
        for r in rows
    ]
    return "\n".join([head, *body])


def write_comparison_csv(rows: Sequence[ComparisonRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "accuracy", "precision", "recall", "f1"])
        for r in rows:
            w.writerow([r.model, repr(r.accuracy), repr(r.precision), repr(r.recall), repr(r.f1)])
    return path


def write_report_json(report: ClassReport, path, model: str, auc: float | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(model, auc), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def evaluate_model(model, X: FeatureMatrix, y) -> tuple[ClassReport, float | None]:
    """Report plus ROC-AUC (None when ``y`` holds a single class)."""
    y = _binary(y, "y")
    report = classification_report(y, predict_labels(model, X))
    auc = roc_auc(y, decision_scores(model, X)) if 0 < y.sum() < y.size else None
    return report, auc
