"""Run configuration: one JSON file captures a reproducible pipeline run.

Example (every key optional except ``config_version`` and ``seed``)::

    {
      "config_version": 1,
      "seed": 7,
      "inputs": {"wallets": "data/wallets.csv",
                 "transfers": "data/transfers.csv",
                 "mixers": "data/mixers.txt"},
      "output_dir": "out",
      "split_ratios": [0.70, 0.15, 0.15],
      "k": 5,
      "threads": 1,
      "strict": true,
      "features": {"graph": true, "transfers": true, "window": 604800,
                   "large_pct": 90, "small_pct": 10},
      "models": {"logistic": {"learning_rate": 0.1}, "forest": {}, "svm": {}},
      "rules": {"smurfing": {"min_count": 10}, "structuring": {},
                "fanout": {}, "burst": {}},
      "fixture": {"n_wallets": 1000, "n_benign_transfers": null, "planted": null},
      "profile": {"top_k": 10, "bins": 30, "activity_top": 15, "skew_threshold": 2.0}
    }

Relative paths resolve against the directory holding the config file.
Model seeds are derived from ``seed``; a ``seed`` inside a model block is
rejected so that every random stream traces back to the one master seed.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .features import FeatureConfig
from .fixture import FixtureParams
from .learn import ModelConfig, model_config
from .rules import RuleParams
from .seeding import derive_seed

CONFIG_VERSION = 1
MODEL_KINDS = ("logistic", "forest", "svm")

DEFAULTS: dict[str, Any] = {
    "config_version": CONFIG_VERSION,
    "seed": 0,
    "inputs": {"wallets": None, "transfers": None, "mixers": None},
    "output_dir": "out",
    "split_ratios": [0.70, 0.15, 0.15],
    "k": 5,
    "threads": 1,
    "strict": True,
    "features": {"graph": True, "transfers": True, "window": 7 * 24 * 3600,
                 "large_pct": 90.0, "small_pct": 10.0},
    "models": {"logistic": {}, "forest": {}, "svm": {}},
    "rules": {"smurfing": {}, "structuring": {}, "fanout": {}, "burst": {}},
    "fixture": {"n_wallets": 1000, "n_benign_transfers": None, "planted": None},
    "profile": {"top_k": 10, "bins": 30, "activity_top": 15, "skew_threshold": 2.0},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            # model and rule blocks are checked by their own dataclasses
            if path.count(".") == 2 and path.startswith(("models.", "rules.")):
                out[key] = copy.deepcopy(value)
                continue
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b=value``; the value is read as JSON when possible, else as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


@dataclass
class RunConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: list[str] = ()) -> "RunConfig":
        raw: dict = {}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                raw = json.loads(path.read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
            if "seed" not in raw:
                raise ConfigError("config must set 'seed'")
            if raw.get("config_version") != CONFIG_VERSION:
                raise ConfigError(
                    f"unsupported config_version {raw.get('config_version')!r}; expected {CONFIG_VERSION}"
                )
            base = path.resolve().parent
        data = _merge(DEFAULTS, raw)
        for text in overrides:
            keys, value = parse_override(text)
            data = _merge(data, _nest(keys, value))
        cfg = cls(data, base)
        cfg.validate()
        return cfg

    # -- validation ------------------------------------------------------------

    def validate(self) -> None:
        d = self.data
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool):
            raise ConfigError("seed must be an integer")
        ratios = d["split_ratios"]
        if (not isinstance(ratios, list) or len(ratios) != 3
                or not all(isinstance(r, (int, float)) and r >= 0 for r in ratios)):
            raise ConfigError("split_ratios must be three nonnegative numbers")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"ratios must sum to 1 (got {sum(ratios):g})")
        if not isinstance(d["k"], int) or d["k"] < 2:
            raise ConfigError("k must be an integer >= 2")
        if not isinstance(d["threads"], int) or d["threads"] < 1:
            raise ConfigError("threads must be an integer >= 1")
        for kind in d["models"]:
            if kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model kind {kind!r}")
            if "seed" in d["models"][kind]:
                raise ConfigError(f"models.{kind}.seed is derived from the master seed; remove it")
        try:
            self.model_configs()
            self.rule_params()
            self.feature_config()
            self.fixture_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    # -- typed views -----------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def threads(self) -> int:
        return self.data["threads"]

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.data["output_dir"])

    def resolve(self, p) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def input_path(self, name: str) -> Path | None:
        return self.resolve(self.data["inputs"].get(name))

    def model_configs(self) -> dict[str, ModelConfig]:
        return {
            kind: model_config(kind, seed=derive_seed(self.seed, f"model.{kind}"),
                               **self.data["models"].get(kind, {}))
            for kind in MODEL_KINDS
        }

    def rule_params(self) -> RuleParams:
        return RuleParams.from_dict(self.data["rules"])

    def feature_config(self) -> FeatureConfig:
        f = self.data["features"]
        return FeatureConfig(window=int(f["window"]), large_pct=float(f["large_pct"]),
                             small_pct=float(f["small_pct"]))

    def fixture_params(self) -> FixtureParams:
        f = self.data["fixture"]
        return FixtureParams(
            n_wallets=int(f["n_wallets"]),
            n_benign_transfers=f.get("n_benign_transfers"),
            planted=f.get("planted"),
            seed=self.seed,
            rules=self.rule_params(),
        )

    def hash(self) -> str:
        """Digest of the keys that can change results.

        Paths are hashed as written. ``threads`` and ``output_dir`` are left
        out: neither affects any artifact, so a re-run with a different worker
        count or destination reproduces the same manifest.
        """
        data = {k: v for k, v in self.data.items() if k not in ("threads", "output_dir")}
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _nest(keys: list[str], value) -> dict:
    out: Any = value
    for k in reversed(keys):
        out = {k: out}
    return out
