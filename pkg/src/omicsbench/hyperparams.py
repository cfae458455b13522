"""The fixed hyperparameter grid and random draws from it."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

GRID: dict[str, tuple] = {
    "batch_size": (8, 16, 32),
    "dropout_rate": (0.1, 0.3, 0.5, 0.7),
    "epochs": tuple(range(2, 21)),
    "gamma": (0.0, 0.1, 0.3, 0.5),
    "layer_dim": (32, 64, 128, 256, 512, 1024),
    "learning_rate": (0.001, 0.01),
    "margin": (0.2, 0.5, 1.0),
    "weight_decay": (0.0001, 0.001, 0.01, 0.05, 0.1),
}

# MOMA's module count is tuned too. Attention cost grows with its square, and
# a few dozen 2-D unit vectors already cover the circle densely.
MODULE_COUNT_GRID: tuple[int, ...] = (16, 32, 64)


@dataclass(frozen=True)
class HyperParams:
    batch_size: int = 16
    dropout_rate: float = 0.1
    epochs: int = 10
    gamma: float = 0.1
    layer_dim: int = 64
    learning_rate: float = 0.01
    margin: float = 0.5
    weight_decay: float = 0.0001
    module_count: int = 32

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in kinds:
                raise KeyError(f"unknown hyperparameter {k!r}")
            out[k] = int(float(v)) if kinds[k] == "int" else float(v)
        return cls(**out)

    def validate(self) -> None:
        for name, values in GRID.items():
            if getattr(self, name) not in values:
                raise ValueError(f"{name}={getattr(self, name)!r} is not in the grid {values}")
        if self.module_count not in MODULE_COUNT_GRID:
            raise ValueError(f"module_count={self.module_count} is not in {MODULE_COUNT_GRID}")


def grid_size() -> int:
    return math.prod(len(v) for v in GRID.values())


def sample_hyperparams(rng: np.random.Generator, n: int) -> list[HyperParams]:
    """``n`` independent uniform draws per grid row (with replacement)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    out = []
    for _ in range(n):
        draw = {name: values[int(rng.integers(len(values)))] for name, values in GRID.items()}
        draw["module_count"] = MODULE_COUNT_GRID[int(rng.integers(len(MODULE_COUNT_GRID)))]
        out.append(HyperParams(**draw))
    return out
