"""Experiment configuration: a flat ``key=value`` file plus overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .network import NetworkSpec
from .ole_loss import OleConfig

LOSS_MODES = ("softmax", "ole", "softmax+ole")
OPTIMIZERS = ("sgd_nesterov", "adam")
DATASET_KINDS = ("blobs", "csv", "idx")
EVAL_RULES = ("auto", "argmax", "knn")


# keys that are not valid Python identifiers
ALIASES = {"lambda": "lam"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # dataset
    dataset: str = "blobs"
    blob_dim: int = 16
    blob_classes: int = 3
    blob_train_per_class: int = 200
    blob_test_per_class: int = 50
    blob_spread: float = 0.1
    blob_seed: int = 0
    # comma-separated class ids to train on; the rest are held out as novel
    known_classes: str = ""
    train_path: str = ""
    test_path: str = ""
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    # network
    hidden: str = "100,100,100"
    feature_dim: int = 100
    use_batchnorm: bool = True
    feature_batchnorm: bool = True
    # loss
    mode: str = "softmax+ole"
    lam: float = 0.25
    delta_clamp: float = 1.0
    sv_threshold: float = 1e-6
    eval_rule: str = "auto"
    # optimization
    optimizer: str = "sgd_nesterov"
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_all: bool = True
    lr_schedule: bool = True
    epochs: int = 30
    batch_size: int = 64
    stratified: bool = False
    seed: int = 0
    repeats: int = 1
    val_fraction: float = 0.1
    output_dir: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in LOSS_MODES:
            raise ConfigError(f"mode must be one of {LOSS_MODES}, got {self.mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.dataset not in DATASET_KINDS:
            raise ConfigError(f"dataset must be one of {DATASET_KINDS}, got {self.dataset!r}")
        if self.eval_rule not in EVAL_RULES:
            raise ConfigError(f"eval_rule must be one of {EVAL_RULES}, got {self.eval_rule!r}")
        if "ole" in self.mode and self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.repeats < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("repeats, epochs and batch_size must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        try:
            self.hidden_dims
        except ValueError:
            raise ConfigError(f"hidden must be comma-separated integers, got {self.hidden!r}") from None
        try:
            OleConfig(self.delta_clamp, self.sv_threshold)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(int(h) for h in self.hidden.split(",") if h.strip())

    @property
    def known_class_ids(self) -> tuple[int, ...]:
        try:
            return tuple(int(c) for c in self.known_classes.split(",") if c.strip())
        except ValueError:
            raise ConfigError(f"known_classes must be comma-separated integers, got {self.known_classes!r}") from None

    @property
    def ole(self) -> OleConfig:
        return OleConfig(self.delta_clamp, self.sv_threshold)

    def network_spec(self, input_dim: int, class_count: int) -> NetworkSpec:
        return NetworkSpec(
            input_dim,
            self.hidden_dims,
            self.feature_dim,
            class_count,
            self.use_batchnorm,
            feature_batchnorm=self.feature_batchnorm,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        names = {v: k for k, v in ALIASES.items()}
        return "".join(f"{names.get(f.name, f.name)}={_format(getattr(self, f.name))}\n" for f in fields(self))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(name: str, raw: str, kind):
    raw = raw.strip()
    if kind in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind if isinstance(kind, str) else kind.__name__}") from None
    return raw


def parse_assignments(pairs, base: dict | None = None) -> dict:
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    out = dict(base or {})
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = ALIASES.get(key.strip(), key.strip())
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, value, types[key])
    return out


def read_config_file(path) -> list[str]:
    """Non-blank, non-comment lines of a config file."""
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


def load_config(path=None, overrides=(), **extra) -> ExperimentConfig:
    """File values first, then ``--set`` overrides, then keyword extras."""
    values = parse_assignments(read_config_file(path)) if path else {}
    values = parse_assignments(overrides, values)
    values.update({k: v for k, v in extra.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
