"""Soft-margin RBF support vector machine trained by SMO.

The dual ``min 1/2 a'Qa - e'a`` s.t. ``0 <= a_i <= C``, ``y'a = 0`` is solved
one pair at a time. The first index is the maximal KKT violator; the second
maximises the guaranteed objective decrease (second-order working-set
selection). Iteration stops when the maximal violation gap drops below
``tol`` or after ``max_passes * n`` pair updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SvmConfig

_TAU = 1e-12


def rbf_kernel(x, z, gamma: float) -> float:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    d = x - z
    return float(np.exp(-gamma * float(d @ d)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.einsum("ij,ij->i", A, A)[:, None]
        + np.einsum("ij,ij->i", B, B)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def scale_gamma(X: np.ndarray) -> float:
    """``1 / (p * mean column variance)``; 1.0 when the data has no spread."""
    var = float(np.mean(np.var(X, axis=0))) if X.size else 0.0
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    converged: bool = True
    iterations: int = 0
    gap: float = 0.0
    config: SvmConfig = field(default_factory=SvmConfig)
    # full dual solution over the training rows; not serialized
    alpha: np.ndarray | None = field(default=None, repr=False)

    kind = "svm"

    @property
    def n_features(self) -> int:
        return int(self.support_vectors.shape[1])

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        if self.dual_coef.size == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_matrix(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_scores(X) > 0).astype(np.int64)

    def parameters(self) -> dict:
        return {
            "support_vectors": [[float(v) for v in row] for row in self.support_vectors],
            "dual_coef": [float(v) for v in self.dual_coef],
            "bias": float(self.bias),
            "gamma": float(self.gamma),
        }

    def training_stats(self) -> dict:
        return {"converged": self.converged, "iterations": self.iterations, "gap": self.gap}


def _snap(a: float, C: float) -> float:
    if a <= 1e-15 * C:
        return 0.0
    if a >= C * (1 - 1e-15):
        return C
    return a


def train_svm(X: np.ndarray, y: np.ndarray, config: SvmConfig | None = None) -> SvmModel:
    config = config or SvmConfig()
    X = np.asarray(X, dtype=float)
    y01 = np.asarray(y)
    if len(np.unique(y01)) < 2:
        raise ValueError("degenerate labels: training data needs both classes")
    ys = np.where(y01 > 0, 1.0, -1.0)
    n = X.shape[0]
    C = float(config.c)
    gamma = scale_gamma(X) if config.gamma == "scale" else float(config.gamma)

    K = rbf_matrix(X, X, gamma)
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective, Q a - e
    max_iter = max(1, config.max_passes) * n
    converged = False
    gap = np.inf
    it = 0
    while it < max_iter:
        score = -ys * grad
        up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
        low = ((ys < 0) & (alpha < C)) | ((ys > 0) & (alpha > 0))
        if not up.any() or not low.any():
            gap = 0.0
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        m_up = score[i]
        m_low = float(np.min(np.where(low, score, np.inf)))
        gap = float(m_up - m_low)
        if gap < config.tol:
            converged = True
            break
        b = m_up - score
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, _TAU)
        cand = low & (b > 0)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))
        # step along a_i += y_i t, a_j -= y_j t
        t = b[j] / a[j]
        t = min(t, C - alpha[i] if ys[i] > 0 else alpha[i])
        t = min(t, alpha[j] if ys[j] > 0 else C - alpha[j])
        old_i, old_j = alpha[i], alpha[j]
        alpha[i] = _snap(old_i + ys[i] * t, C)
        alpha[j] = _snap(old_j - ys[j] * t, C)
        grad += ys * (ys[i] * (alpha[i] - old_i) * K[:, i] + ys[j] * (alpha[j] - old_j) * K[:, j])
        it += 1

    score = -ys * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(np.mean(score[free]))
    else:
        up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
        low = ((ys < 0) & (alpha < C)) | ((ys > 0) & (alpha > 0))
        hi = np.max(score[up]) if up.any() else np.min(score[low])
        lo = np.min(score[low]) if low.any() else hi
        bias = float((hi + lo) / 2.0)
    sv = alpha > 0
    return SvmModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * ys)[sv],
        bias=bias,
        gamma=gamma,
        converged=converged,
        iterations=it,
        gap=float(gap),
        config=config,
        alpha=alpha,
    )
