from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import ClassVar, Union


@dataclass(frozen=True)
class LogisticConfig:
    kind: ClassVar[str] = "logistic"
    learning_rate: float = 0.1
    l2: float = 1.0
    max_iters: int = 1000
    tol: float = 1e-6
    # reserved: full-batch descent is deterministic
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.l2 < 0 or self.max_iters < 0:
            raise ValueError("l2 and max_iters must be >= 0")


@dataclass(frozen=True)
class ForestConfig:
    kind: ClassVar[str] = "forest"
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    # "sqrt" -> ceil(sqrt(p)), "all" -> p, or an explicit integer
    features_per_split: str | int = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if isinstance(self.features_per_split, str):
            if self.features_per_split not in ("sqrt", "all"):
                raise ValueError("features_per_split must be 'sqrt', 'all' or an integer")
        elif self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")


@dataclass(frozen=True)
class SvmConfig:
    kind: ClassVar[str] = "svm"
    c: float = 1.0
    # "scale" -> 1 / (p * mean column variance)
    gamma: float | str = "scale"
    tol: float = 1e-3
    max_passes: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be > 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if isinstance(self.gamma, str):
            if self.gamma != "scale":
                raise ValueError("gamma must be a number >= 0 or 'scale'")
        elif self.gamma < 0:
            raise ValueError("gamma must be >= 0")


ModelConfig = Union[LogisticConfig, ForestConfig, SvmConfig]
CONFIG_TYPES = {cls.kind: cls for cls in (LogisticConfig, ForestConfig, SvmConfig)}


def model_config(kind: str, **params) -> ModelConfig:
    try:
        cls = CONFIG_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None
    return cls(**params)


def config_to_dict(config: ModelConfig) -> dict:
    return {"kind": config.kind, **asdict(config)}
