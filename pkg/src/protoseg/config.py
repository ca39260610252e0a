"""Flat `key = value` run configuration with command-line overrides."""

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    seed: int = 0
    k_shot: int = 1
    sample_k: bool = False
    fold: int = 0
    iterations: int = 1000
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch: int = 4
    prototypes: int = 3
    levels: int = 4
    head_width: int = 64
    episodes: int = 200
    per_class: int = 40
    image_size: int = 64
    distractors: int = 1
    num_classes: int = 6
    num_folds: int = 2
    log_every: int = 50
    snapshot_every: int = 0
    lr_drop_at: int = 0
    lr_drop_factor: float = 1.0
    flip_augment: bool = True
    rotate_augment: bool = True
    color_augment: bool = True
    freeze_backbone: bool = False
    data: str = ""
    out: str = ""
    checkpoint: str = ""

    def validate(self):
        for name in ("k_shot", "iterations", "batch", "prototypes", "levels", "head_width",
                     "episodes", "per_class", "image_size"):
            if getattr(self, name) < (0 if name == "iterations" else 1):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("bad optimizer hyperparameters")
        if not 0 <= self.fold < self.num_folds:
            raise ConfigError(f"fold {self.fold} out of range for {self.num_folds} folds")
        return self


def _coerce(name, value, kind):
    try:
        if kind is bool:
            if str(value).lower() in ("1", "true", "yes", "on"):
                return True
            if str(value).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def load_config(path=None, overrides=None):
    """Read a flat config file, then apply overrides (a dict of key -> raw value)."""
    kinds = {f.name: f.type if isinstance(f.type, type) else type(f.default) for f in fields(RunConfig)}
    values = {}
    if path:
        text = Path(path)
        if not text.is_file():
            raise ConfigError(f"config file not found: {path}")
        for lineno, line in enumerate(text.read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key, _, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in kinds:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, raw.strip(), kinds[key])
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        key = key.replace("-", "_")
        if key not in kinds:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw, kinds[key])
    return RunConfig(**values).validate()
