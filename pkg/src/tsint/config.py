"""Run configuration: defaults, validation, YAML loading and resolution."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .interactions import estimate_tau

METHODS = ("contrastive", "tsint", "superloss", "prism")


@dataclass
class RunConfig:
    method: str = "tsint"

    # data: either two dataset files or a synthetic recipe
    train_path: str | None = None
    test_path: str | None = None
    n_classes: int = 50
    per_class: int = 20
    d_in: int = 128
    separation: float = 1.4
    within_std: float = 1.0
    train_fraction: float = 0.5
    noise_rate: float = 0.0

    # model and optimization
    hidden: int = 0
    d_out: int = 32
    nonlinear: bool = True
    init_scale: float = 1.0
    epochs: int = 150
    batch_size: int = 80
    k: int = 4
    lr: float = 0.1
    margin: float = 0.5
    q: int = 1

    # teacher-based selection
    tau: float | str = "auto"
    beta: float = 0.9
    alpha: float = 0.99
    teacher_ema: bool = True
    dcut_ema: bool = True

    # confidence weighting baseline
    superloss_lambda: float = 0.1
    superloss_mode: str = "global"
    superloss_smoothing: float = 0.9

    # class-center selection baseline; prism_rate None -> noise_rate
    prism_rate: float | None = None
    prism_window: int = 10
    prism_capacity: int = 8192
    prism_temperature: float = 1.0

    data_seed: int = 0
    noise_seed: int = 1
    train_seed: int = 2

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if (self.train_path is None) != (self.test_path is None):
            raise ConfigError("train_path and test_path must be given together")
        _in_range("noise_rate", self.noise_rate, 0.0, 1.0)
        _in_range("train_fraction", self.train_fraction, 0.0, 1.0, closed=False)
        for name in ("epochs",):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("n_classes", "per_class", "d_in", "d_out", "batch_size", "k",
                     "prism_window", "prism_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.hidden < 0:
            raise ConfigError("hidden must be >= 0 (0 disables the hidden layer)")
        if self.batch_size % self.k:
            raise ConfigError(f"batch_size {self.batch_size} not divisible by k={self.k}")
        for name in ("lr", "margin", "separation", "within_std", "init_scale",
                     "superloss_lambda", "prism_temperature"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.q not in (1, 2):
            raise ConfigError("q must be 1 or 2")
        if isinstance(self.tau, str):
            if self.tau != "auto":
                raise ConfigError(f"tau must be a number in (0, 1] or 'auto', got {self.tau!r}")
        elif not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        _in_range("beta", self.beta, 0.0, 1.0, hi_open=True)
        _in_range("alpha", self.alpha, 0.0, 1.0)
        if self.superloss_mode not in ("global", "exp"):
            raise ConfigError("superloss_mode must be 'global' or 'exp'")
        _in_range("superloss_smoothing", self.superloss_smoothing, 0.0, 1.0, hi_open=True)
        if self.prism_rate is not None:
            _in_range("prism_rate", self.prism_rate, 0.0, 1.0, hi_open=True)
        return self

    def resolved(self) -> "RunConfig":
        """Copy with ``tau`` and ``prism_rate`` turned into concrete numbers."""
        self.validate()
        cfg = dataclasses.replace(self)
        if cfg.tau == "auto":
            cfg.tau = estimate_tau(cfg.noise_rate, cfg.k)
        if cfg.prism_rate is None:
            cfg.prism_rate = min(cfg.noise_rate, 0.99)
        return cfg

    def to_dict(self):
        return dataclasses.asdict(self)


def _in_range(name, value, lo, hi, closed=True, hi_open=False):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None
    if closed and not hi_open:
        ok = lo <= value <= hi
    elif hi_open:
        ok = lo <= value < hi
    else:
        ok = lo < value < hi
    if not ok:
        raise ConfigError(f"{name}={value} outside its allowed range")


def _field_types():
    return {f.name: f.type for f in fields(RunConfig)}


def parse_value(name, raw):
    """Convert a string (CLI or YAML scalar) to the type of RunConfig field ``name``."""
    types = _field_types()
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    kind = types[name]
    if raw is None or (isinstance(raw, str) and raw.lower() in ("none", "null")):
        if "None" in kind:
            return None
        raise ConfigError(f"{name} may not be null")
    try:
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind.startswith("int"):
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError(raw)
            return int(raw)
        if kind.startswith("float | str"):
            if isinstance(raw, str) and raw == "auto":
                return raw
            return float(raw)
        if kind.startswith("float"):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {raw!r} for {name} ({kind})") from None


def from_mapping(data: dict, base: RunConfig | None = None) -> RunConfig:
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    for key, raw in data.items():
        setattr(cfg, key, parse_value(key, raw))
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    return from_mapping(data).validate()
