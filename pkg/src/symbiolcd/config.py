"""Run configuration: every tunable in one place, loadable from a JSON file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .forest import ForestHyperparams
from .geometry import DEFAULT_EPS_POS, TemporalParams
from .ingest.synthetic import SyntheticConfig
from .objfilter import DEFAULT_MOVING_LABELS, FilterPolicy
from .pipeline import PipelineConfig


@dataclass
class RunConfig:
    # randomness
    seed: int = 42
    split_seed: int = 0
    # filter policy
    moving_labels: tuple[str, ...] = tuple(sorted(DEFAULT_MOVING_LABELS))
    max_objects: int = 8
    max_area_fraction: float = 0.5
    min_confidence: float = 0.7
    # geometry and vocabulary
    alpha: float = 100.0
    beta_s: float = 1.0
    eps_pos: float = DEFAULT_EPS_POS
    insert_period: int = 5
    exclusion_window: int = 30
    threshold: float = 0.5
    # forest
    estimators: int = 100
    max_features: str = "sqrt"
    max_depth: int | None = None
    min_samples_split: int = 2
    # bow
    bow_k: int = 9
    bow_depth: int = 3
    # evaluation
    runs: int = 50
    split: float = 0.3
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def policy(self) -> FilterPolicy:
        return FilterPolicy(frozenset(self.moving_labels), self.max_area_fraction,
                            self.max_objects, self.min_confidence)

    def temporal(self) -> TemporalParams:
        return TemporalParams(self.alpha, self.beta_s)

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.policy(), self.temporal(), self.eps_pos,
                              self.insert_period, self.exclusion_window, self.threshold)

    def hyperparams(self) -> ForestHyperparams:
        mf = self.max_features
        if isinstance(mf, str) and mf.isdigit():
            mf = int(mf)
        elif mf in ("all", "none", None):
            mf = None
        return ForestHyperparams(n_estimators=self.estimators, max_features=mf,
                                 max_depth=self.max_depth, min_samples_split=self.min_samples_split,
                                 seed=self.seed)

    def validate(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold {self.threshold} must be in [0, 1]")
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split {self.split} must be in (0, 1)")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        self.pipeline()
        self.hyperparams()


TUNABLES = {f.name for f in fields(RunConfig)} - {"extra"}


def load_config_file(path) -> dict:
    """Read a JSON object of tunables; keys may use dashes or underscores."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return {key.replace("-", "_"): value for key, value in raw.items()}


def synthetic_config(seed: int, overrides: dict | None = None) -> SyntheticConfig:
    """A generator config with list-valued overrides converted to tuples."""
    known = {f.name for f in fields(SyntheticConfig)}
    kw = {}
    for k, v in (overrides or {}).items():
        if k not in known:
            raise ConfigError(f"unknown generator setting {k!r}")
        if isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        kw[k] = v
    cfg = SyntheticConfig(**{**kw, "seed": seed})
    cfg.validate()
    return cfg


def as_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["moving_labels"] = list(d["moving_labels"])
    return d
