"""Run configuration: YAML schema, flag overrides, validation, and the content
hash used to name run directories."""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import yaml

from .errors import ConfigError

DEFAULT_GRID = [10.0, 1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 0.0]


@dataclass
class DataConfig:
    raw_path: str = ""
    manifest_dir: str = ""
    delimiter: str = ","
    has_header: bool = False
    user_col: int = 0
    item_col: int = 1
    time_col: int = 2
    min_user: int = 20
    min_item: int = 20
    ratios: tuple = (0.6, 0.2, 0.2)


@dataclass
class ModelConfig:
    dim: int = 32
    init_scale: float = 0.01


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = None  # defaults per kind: adam 0.01, sgd 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    r_decay: float = None


@dataclass
class RegularizationConfig:
    mode: str = "opt"  # fix | opt | sgda
    granularity: str = "full"
    fixed_value: float = None
    grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    init: float = 0.0
    step_size: float = 1e-3
    clip: float = 1.0
    every: int = 1
    adam_on_lambda: bool = False
    dense_penalty: bool = False


@dataclass
class TrainingConfig:
    epochs: int = 200
    batch_size: int = 1024
    lambda_batch_size: int = 1024
    eval_every: int = 5
    patience: int = 20
    seed: int = 0


@dataclass
class GroupsConfig:
    user_boundaries: list = field(default_factory=lambda: [25, 50, 100])
    item_boundaries: list = field(default_factory=lambda: [15, 30, 60])


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    groups: GroupsConfig = field(default_factory=GroupsConfig)
    output: str = "runs"
    threads: int = 0
    deterministic: bool = True


_SECTIONS = {
    "data": DataConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "regularization": RegularizationConfig,
    "training": TrainingConfig,
    "groups": GroupsConfig,
}


def load_config(path=None, overrides=()):
    """Build a RunConfig from an optional YAML file plus dotted overrides
    (e.g. training.epochs=5); flags win over the file."""
    raw = {}
    if path:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    cfg = RunConfig()
    for section, cls in _SECTIONS.items():
        block = raw.get(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"config section {section!r} must be a mapping")
        obj = getattr(cfg, section)
        for key, value in block.items():
            if not hasattr(obj, key):
                raise ConfigError(f"unknown config key {section}.{key}")
            setattr(obj, key, value)
    for key in ("output", "threads", "deterministic"):
        if key in raw:
            setattr(cfg, key, raw[key])
    for ov in overrides:
        _apply_override(cfg, ov)
    return resolve(cfg)


def _apply_override(cfg, spec):
    if "=" not in spec:
        raise ConfigError(f"override {spec!r} must be key=value")
    key, value = spec.split("=", 1)
    parts = key.split(".")
    obj = cfg
    for p in parts[:-1]:
        if not hasattr(obj, p):
            raise ConfigError(f"unknown config path {key!r}")
        obj = getattr(obj, p)
    leaf = parts[-1]
    if not hasattr(obj, leaf):
        raise ConfigError(f"unknown config path {key!r}")
    current = getattr(obj, leaf)
    setattr(obj, leaf, _coerce(value, current))


def _coerce(text, current):
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, (list, tuple)):
        vals = [v for v in text.replace("[", "").replace("]", "").split(",") if v]
        return type(current)(float(v) if "." in v or "e" in v.lower() else int(v)
                             for v in vals)
    if current is None:
        try:
            return float(text)
        except ValueError:
            return text
    return text


def resolve(cfg):
    """Fill derived defaults, apply presets, and validate."""
    from .adaptive import canonical_granularity

    reg = cfg.regularization
    opt = cfg.optimizer
    if reg.mode not in ("fix", "opt", "sgda"):
        raise ConfigError(f"unknown regularization mode {reg.mode!r}")
    if reg.mode == "sgda":
        # the SGDA baseline: dimension-wise coefficients with plain-SGD updates
        reg.granularity = "dim"
        opt.kind = "sgd"
    if reg.mode in ("opt", "sgda"):
        reg.granularity = canonical_granularity(reg.granularity)
    if reg.mode == "fix" and reg.fixed_value is None and not reg.grid:
        raise ConfigError("mode=fix requires a fixed_value or a grid list")
    if opt.kind not in ("sgd", "adam"):
        raise ConfigError(f"unknown optimizer kind {opt.kind!r}")
    if opt.lr is None:
        opt.lr = 0.01 if opt.kind == "adam" else 0.05
    for name, value in (("optimizer.lr", opt.lr),
                        ("regularization.step_size", reg.step_size),
                        ("regularization.clip", reg.clip),
                        ("model.init_scale", cfg.model.init_scale)):
        if value <= 0:
            raise ConfigError(f"{name} must be positive, got {value}")
    if reg.mode == "fix" and reg.fixed_value is not None and reg.fixed_value < 0:
        raise ConfigError("fixed_value must be nonnegative")
    if cfg.training.batch_size <= 0 or cfg.training.lambda_batch_size <= 0:
        raise ConfigError("batch sizes must be positive")
    return cfg


def semantic_dict(cfg):
    """Config content that affects results (excludes output/threads/seed)."""
    d = asdict(cfg)
    d.pop("output", None)
    d.pop("threads", None)
    d.pop("deterministic", None)
    d["training"].pop("seed", None)
    return d


def config_hash(cfg):
    blob = json.dumps(semantic_dict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def run_dir_name(cfg):
    return f"{config_hash(cfg)}-seed{cfg.training.seed}"
