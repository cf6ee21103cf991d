"""From-scratch binary classifiers: logistic regression, random forest, RBF SVM."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from ..features import FeatureMatrix
from .config import (
    CONFIG_TYPES,
    ForestConfig,
    LogisticConfig,
    ModelConfig,
    SvmConfig,
    config_to_dict,
    model_config,
)
from .forest import DecisionTree, ForestModel, gini, grow_tree, train_random_forest
from .logistic import LogisticModel, logistic_gradient, logistic_loss, sigmoid, train_logistic
from .svm import SvmModel, rbf_kernel, rbf_matrix, scale_gamma, train_svm

TrainedModel = Union[LogisticModel, ForestModel, SvmModel]
FORMAT_VERSION = 1

__all__ = [
    "DecisionTree", "ForestConfig", "ForestModel", "LogisticConfig", "LogisticModel",
    "ModelConfig", "SvmConfig", "SvmModel", "TrainedModel", "decision_scores", "gini",
    "grow_tree", "load_model", "logistic_gradient", "logistic_loss", "model_config",
    "model_from_dict", "model_to_dict", "predict_labels", "rbf_kernel", "rbf_matrix",
    "save_model", "scale_gamma", "sigmoid", "train_logistic", "train_model",
    "train_random_forest", "train_svm",
]


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)


def train_model(X, y, config: ModelConfig, threads: int = 1) -> TrainedModel:
    """Train the model kind named by ``config``.

    Logistic regression and the SVM expect standardized features; the forest
    takes raw ones.
    """
    Xv = _values(X)
    y = np.asarray(y, dtype=np.int64)
    if Xv.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in row count")
    if isinstance(config, LogisticConfig):
        return train_logistic(Xv, y, config)
    if isinstance(config, ForestConfig):
        return train_random_forest(Xv, y, config, threads=threads)
    if isinstance(config, SvmConfig):
        return train_svm(Xv, y, config)
    raise TypeError(f"not a model config: {config!r}")


def _checked(model: TrainedModel, X) -> np.ndarray:
    Xv = _values(X)
    if Xv.ndim != 2 or Xv.shape[1] != model.n_features:
        raise ValueError(
            f"width mismatch: model expects {model.n_features} features, got {Xv.shape[-1]}"
        )
    return Xv


def predict_labels(model: TrainedModel, X) -> np.ndarray:
    """Logistic: p >= 0.5; forest: strict majority of trees; SVM: f(x) > 0."""
    return model.predict(_checked(model, X))


def decision_scores(model: TrainedModel, X) -> np.ndarray:
    """Logistic: probability; forest: share of trees voting 1; SVM: raw f(x)."""
    return model.decision_scores(_checked(model, X))


def model_to_dict(model: TrainedModel) -> dict:
    config = config_to_dict(model.config)
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "seed": config.pop("seed"),
        "hyperparameters": {k: v for k, v in config.items() if k != "kind"},
        "n_features": model.n_features,
        "parameters": model.parameters(),
        "training": model.training_stats(),
    }


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('format_version')!r}")
    kind = d["kind"]
    if kind not in CONFIG_TYPES:
        raise ValueError(f"unknown model kind {kind!r}")
    config = model_config(kind, seed=d["seed"], **d["hyperparameters"])
    p, stats = d["parameters"], d.get("training", {})
    if kind == "logistic":
        return LogisticModel(
            np.asarray(p["weights"], dtype=float), float(p["bias"]),
            stats.get("iterations", 0), stats.get("final_loss", float("nan")),
            stats.get("converged", False), config,
        )
    if kind == "forest":
        trees = [DecisionTree.from_dict(t) for t in p["trees"]]
        return ForestModel(trees, list(p["tree_seeds"]), int(d["n_features"]), config)
    sv = np.asarray(p["support_vectors"], dtype=float).reshape(-1, int(d["n_features"]))
    return SvmModel(
        sv, np.asarray(p["dual_coef"], dtype=float), float(p["bias"]), float(p["gamma"]),
        stats.get("converged", True), stats.get("iterations", 0), stats.get("gap", 0.0), config,
    )


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # json writes floats with repr(), the shortest string that round-trips exactly
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
