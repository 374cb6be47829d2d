"""Training configuration, ablation presets and the key-value config file."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from .errors import ContractError


@dataclass
class TrainConfig:
    # dimensions; d_w = word_dim + 2 * pos_dim and d_h = 3 * filters
    word_dim: int = 50
    pos_dim: int = 5
    filters: int = 230
    window: int = 3
    levels: int = 2
    type_limit: int = 4
    max_distance: int = 100
    min_freq: int = 2
    # optimization
    batch_size: int = 160
    epochs: int = 15
    dropout: float = 0.5
    weight_decay: float = 1e-5
    beta: float = 1.0
    lr: float = 0.1
    rho: float = 0.95
    eps: float = 1e-6
    seed: int = 0
    holdout: float = 0.1
    # ablation switches
    hierarchy: bool = True
    cfte: bool = True
    guidance: bool = True
    type_repr: str = "pairwise"  # pairwise | concat
    type_aug: str = "entity"  # entity | none
    # evaluation
    count_unit: str = "sentences"  # sentences | bags, for long-tail counting

    @property
    def d_w(self) -> int:
        return self.word_dim + 2 * self.pos_dim

    @property
    def d_h(self) -> int:
        return 3 * self.filters

    @property
    def type_dim(self) -> int:
        return 2 * self.word_dim if self.type_aug == "entity" else self.word_dim

    @property
    def d_c(self) -> int:
        return 2 * self.type_dim

    @property
    def active_levels(self) -> int:
        """Coarse levels actually modelled (0 with the hierarchy switched off)."""
        return self.levels if self.hierarchy else 0

    def validate(self) -> "TrainConfig":
        for name in ("word_dim", "pos_dim", "filters", "window", "type_limit", "max_distance",
                     "batch_size", "epochs", "min_freq"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")
        if self.window % 2 == 0:
            raise ContractError(f"window must be odd, got {self.window}")
        if self.levels < 0:
            raise ContractError("levels must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.beta < 0 or self.weight_decay < 0 or self.lr <= 0:
            raise ContractError("beta and weight_decay must be >= 0 and lr > 0")
        if not 0.0 < self.rho < 1.0 or self.eps <= 0:
            raise ContractError("rho must lie in (0, 1) and eps > 0")
        if not 0.0 <= self.holdout < 1.0:
            raise ContractError(f"holdout must lie in [0, 1), got {self.holdout}")
        if self.type_repr not in ("pairwise", "concat"):
            raise ContractError(f"type_repr must be pairwise or concat, got {self.type_repr!r}")
        if self.type_aug not in ("entity", "none"):
            raise ContractError(f"type_aug must be entity or none, got {self.type_aug!r}")
        if self.count_unit not in ("sentences", "bags"):
            raise ContractError(f"count_unit must be sentences or bags, got {self.count_unit!r}")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes).validate()


PRESETS: dict[str, dict[str, Any]] = {
    "full": {},
    "no-hierarchy": {"hierarchy": False},
    "no-cfte": {"cfte": False},
    "no-guidance": {"guidance": False},
    "type-concat": {"type_repr": "concat"},
}


def apply_preset(config: TrainConfig, preset: str) -> TrainConfig:
    if preset not in PRESETS:
        raise ContractError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    return config.replace(**PRESETS[preset])


def coerce(kind, value):
    """Convert a string or YAML scalar to the type of a dataclass field."""
    if kind in (bool, "bool"):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ContractError(f"not a boolean: {value!r}")
    if kind in (int, "int"):
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ContractError(f"not an integer: {value!r}")
        return int(float(value)) if isinstance(value, str) and "e" in value.lower() else int(value)
    if kind in (float, "float"):
        return float(value)
    return str(value)


def update_dataclass(obj, values: dict[str, Any], what: str):
    known = {f.name: f.type for f in fields(obj)}
    changes = {}
    for key, value in values.items():
        if key not in known:
            raise ContractError(f"unknown {what} key {key!r}")
        changes[key] = coerce(known[key], value)
    return dataclasses.replace(obj, **changes)


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ContractError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Flat YAML mapping; nested sections ``train:`` and ``synth:`` are allowed."""
    path = Path(path)
    if not path.exists():
        raise ContractError(f"config file {path} does not exist")
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ContractError(f"config file {path} must hold a key-value mapping")
    return data
