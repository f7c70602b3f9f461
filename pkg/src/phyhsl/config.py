from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


LR_SCHEDULES = ("constant", "cosine")


@dataclass
class TrainConfig:
    epochs: int = 300
    lr: float = 5e-3
    sigma2: float = 1.0
    kl_weight: float = 1.0
    seed: int = 0
    split_fraction: float = 0.75
    use_phys: bool = True
    use_koop: bool = True
    use_dhsl: bool = True
    horizon: int = 10
    hidden: int = 16
    hyperedges: int = 8
    encoder_layers: int = 2
    dhsl_layers: int = 2
    substeps: int = 4
    clip_norm: float = 5.0
    incidence_norm: str = "none"
    lr_schedule: str = "constant"
    standardize: bool = True
    resample_noise: bool = False
    train_rollout: bool = True
    allow_no_dynamics: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.sigma2 <= 0:
            raise ConfigError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.epochs < 0 or self.lr < 0 or self.kl_weight < 0:
            raise ConfigError("epochs, lr and kl_weight must be non-negative")
        if not (self.use_phys or self.use_koop or self.allow_no_dynamics):
            raise ConfigError("both dynamics branches disabled; set allow_no_dynamics for that ablation")
        for name in ("hidden", "hyperedges", "encoder_layers", "dhsl_layers", "substeps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.horizon < 0:
            raise ConfigError(f"horizon must be >= 0, got {self.horizon}")
        if self.incidence_norm not in ("none", "softmax"):
            raise ConfigError(f"incidence_norm must be 'none' or 'softmax', got {self.incidence_norm!r}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig field(s): {sorted(unknown)}")
        return cls(**doc)

    def replace(self, **changes) -> "TrainConfig":
        doc = self.to_dict()
        doc.update(changes)
        return TrainConfig.from_dict(doc)


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
