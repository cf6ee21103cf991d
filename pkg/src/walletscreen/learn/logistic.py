"""L2-regularised logistic regression by full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import LogisticConfig


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(w, b, X, y, l2) -> float:
    """Mean cross-entropy plus ``l2 / (2n) * |w|^2``."""
    n = X.shape[0]
    z = X @ w + b
    # log(1 + e^z) - y z == -[y log s(z) + (1 - y) log(1 - s(z))]
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + l2 / (2 * n) * float(w @ w))


def logistic_gradient(w, b, X, y, l2) -> tuple[np.ndarray, float]:
    n = X.shape[0]
    r = sigmoid(X @ w + b) - y
    return X.T @ r / n + (l2 / n) * w, float(r.mean())


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    iterations: int = 0
    final_loss: float = float("nan")
    converged: bool = False
    config: LogisticConfig = field(default_factory=LogisticConfig)
    losses: list[float] = field(default_factory=list, repr=False)

    kind = "logistic"

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[0])

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(X @ self.weights + self.bias)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_scores(X) >= 0.5).astype(np.int64)

    def parameters(self) -> dict:
        return {"weights": [float(v) for v in self.weights], "bias": float(self.bias)}

    def training_stats(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_loss": self.final_loss,
            "converged": self.converged,
        }


def train_logistic(X: np.ndarray, y: np.ndarray, config: LogisticConfig | None = None) -> LogisticModel:
    """Gradient descent from w = 0, b = 0.

    A step that would raise the loss is retried with half the learning rate,
    so the recorded loss sequence never increases.
    """
    config = config or LogisticConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(y)) < 2:
        raise ValueError("degenerate labels: training data needs both classes")
    w = np.zeros(X.shape[1])
    b = 0.0
    lr = config.learning_rate
    loss = logistic_loss(w, b, X, y, config.l2)
    losses = [loss]
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        gw, gb = logistic_gradient(w, b, X, y, config.l2)
        if max(np.max(np.abs(gw), initial=0.0), abs(gb)) < config.tol:
            converged = True
            it -= 1
            break
        while True:
            w_new = w - lr * gw
            b_new = b - lr * gb
            new_loss = logistic_loss(w_new, b_new, X, y, config.l2)
            if new_loss <= loss or lr < 1e-12:
                break
            lr /= 2.0
        if new_loss > loss:
            # no descent possible at machine precision
            converged = True
            it -= 1
            break
        w, b, loss = w_new, b_new, new_loss
        losses.append(loss)
    return LogisticModel(w, b, it, loss, converged, config, losses)
