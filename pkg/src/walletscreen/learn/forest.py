"""CART decision trees (Gini impurity) and a bootstrap-aggregated forest."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..seeding import derive_seed
from .config import ForestConfig


def gini(counts) -> float:
    """``1 - sum p_c^2`` over the class counts of a node."""
    c = np.asarray(counts, dtype=float)
    total = c.sum()
    if total == 0:
        return 0.0
    p = c / total
    return float(1.0 - np.sum(p * p))


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature[i] == -1`` marks a leaf.

    A sample goes left at a split node when ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2) class counts

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max(initial=0))

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while np.any(active):
            r = rows[active]
            nd = node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def vote(self, X: np.ndarray) -> np.ndarray:
        """Leaf majority class; a tied leaf votes 0."""
        c = self.counts[self.leaf_index(X)]
        return (c[:, 1] > c[:, 0]).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "counts": [[int(a), int(b)] for a, b in self.counts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["counts"], dtype=np.int64).reshape(-1, 2),
        )


def _best_split(X, y, idx, features, min_leaf):
    """Lowest weighted-Gini split of ``idx`` over ``features``.

    Returns ``(score, feature, threshold)`` or None. ``score`` is
    ``n_left * G_left + n_right * G_right``; ties keep the earliest candidate.
    """
    n = idx.shape[0]
    yn = y[idx]
    ones = float(yn.sum())
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    best = None
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        c1 = np.cumsum(yn[order])[:-1].astype(float)
        c0 = n_left - c1
        r1 = ones - c1
        r0 = n_right - r1
        ok = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not np.any(ok):
            continue
        score = (n_left - (c1 * c1 + c0 * c0) / n_left) + (n_right - (r1 * r1 + r0 * r0) / n_right)
        score = np.where(ok, score, np.inf)
        pos = int(np.argmin(score))
        if best is None or score[pos] < best[0]:
            lo, hi = xs[pos], xs[pos + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (float(score[pos]), int(f), float(thr))
    return best


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    *,
    max_depth: int | None = None,
    min_leaf: int = 1,
    n_candidates: int | None = None,
) -> DecisionTree:
    """Grow one CART tree on all rows of ``X``.

    At each node ``n_candidates`` features are drawn without replacement; if
    none of them admits a split the remaining features are tried in the same
    random order before the node is made a leaf.
    """
    p = X.shape[1]
    m = p if n_candidates is None else max(1, min(p, n_candidates))
    y = np.asarray(y, dtype=np.int64)
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        n1 = int(y[idx].sum())
        counts.append((idx.shape[0] - n1, n1))
        return len(feature) - 1

    root = new_node(np.arange(X.shape[0]))
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n0, n1 = counts[node]
        if n0 == 0 or n1 == 0:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        if idx.shape[0] < 2 * min_leaf:
            continue
        perm = rng.permutation(p)
        split = _best_split(X, y, idx, perm[:m], min_leaf)
        if split is None and m < p:
            for f in perm[m:]:
                split = _best_split(X, y, idx, [f], min_leaf)
                if split is not None:
                    break
        if split is None:
            continue
        _, f, thr = split
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return DecisionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(counts, dtype=np.int64).reshape(-1, 2),
    )


def n_split_candidates(rule, p: int) -> int:
    if rule == "sqrt":
        return max(1, math.ceil(math.sqrt(p)))
    if rule == "all":
        return p
    return max(1, min(p, int(rule)))


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    tree_seeds: list[int]
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)

    kind = "forest"
    converged = True

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        """Fraction of trees voting for class 1."""
        votes = np.zeros(X.shape[0])
        for tree in self.trees:
            votes += tree.vote(X)
        return votes / len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # strict majority; an even split goes to class 0
        return (self.decision_scores(X) > 0.5).astype(np.int64)

    def parameters(self) -> dict:
        return {"tree_seeds": list(self.tree_seeds), "trees": [t.to_dict() for t in self.trees]}

    def training_stats(self) -> dict:
        return {"n_nodes": [t.n_nodes for t in self.trees]}


def _fit_one(X, y, config: ForestConfig, seed: int, m: int) -> DecisionTree:
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    boot = rng.integers(0, n, size=n)
    return grow_tree(
        X[boot], y[boot], rng,
        max_depth=config.max_depth, min_leaf=config.min_leaf, n_candidates=m,
    )


def train_random_forest(
    X: np.ndarray, y: np.ndarray, config: ForestConfig | None = None, threads: int = 1
) -> ForestModel:
    """Bagged CART trees; tree ``i`` draws from ``derive_seed(seed, "forest", i)``
    so the result is identical for any ``threads``."""
    config = config or ForestConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] < 2:
        raise ValueError("random forest needs at least two rows")
    if len(np.unique(y)) < 2:
        raise ValueError("degenerate labels: training data needs both classes")
    m = n_split_candidates(config.features_per_split, X.shape[1])
    seeds = [derive_seed(config.seed, "forest", i) for i in range(config.n_trees)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(lambda s: _fit_one(X, y, config, s, m), seeds))
    else:
        trees = [_fit_one(X, y, config, s, m) for s in seeds]
    return ForestModel(trees, seeds, X.shape[1], config)
