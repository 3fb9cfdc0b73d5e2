"""Experiment configuration: flat JSON-compatible keys with echoed defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError

DATASETS = ("mnist", "cifar10")
ARCHS = ("cnn1", "cnn2", "vgg11")
VARIANTS = ("baseline", "v1", "v2")
PRECISIONS = ("single", "double")


@dataclass
class TrainConfig:
    """Full description of one experiment cell.

    For PK-GCN variants the epoch budget splits into ``e1`` (base
    training) and ``e2`` (graph-augmented training); the paired
    baseline trains for ``e1 + e2`` epochs.
    """

    dataset: str = "mnist"
    data_dir: str = "data"
    arch: str = "cnn1"
    variant: str = "baseline"
    train_size: int = 300
    val_size: int = 300
    e1: int = 40
    e2: int = 160
    batch_size: int = 32
    seeds: list = field(default_factory=lambda: [0])
    rho: float = 0.95
    eps: float = 1e-6
    sigma: str = "relu"
    l: Optional[int] = None  # head-v2 half-width; defaults to the embedding width
    similarity_mode: str = "ratio"  # or "count"
    freeze_base: bool = False
    gcn_init_noise: float = 0.01
    precision: str = "single"
    graph_threshold: float = 0.01
    out_dir: str = "runs"

    @property
    def total_epochs(self) -> int:
        return self.e1 + self.e2

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32

    def validate(self) -> "TrainConfig":
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}")
        if self.similarity_mode not in ("ratio", "count"):
            raise ConfigError(f"similarity_mode must be 'ratio' or 'count'")
        if self.sigma not in ("relu", "identity", "tanh"):
            raise ConfigError(f"unknown activation {self.sigma!r}")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if self.e1 < 0 or self.e2 < 0 or self.batch_size < 1:
            raise ConfigError("epoch budgets must be >= 0 and batch size >= 1")
        if min(self.train_size, self.val_size) < 1:
            raise ConfigError("train/val sizes must be positive")
        return self

    def replace(self, **kw) -> "TrainConfig":
        d = asdict(self)
        d.update(kw)
        return TrainConfig(**d).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        try:
            with open(path) as f:
                raw = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config file must contain a JSON object")
        return cls.from_dict(raw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")
