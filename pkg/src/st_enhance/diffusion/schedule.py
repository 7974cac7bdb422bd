import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..core.errors import TimestepError
from ..core.models import DiffusionConfig, ScheduleKind

Timesteps = Union[int, np.ndarray]


def cosine_betas(timesteps: int, offset: float = 0.008, max_beta: float = 0.999) -> np.ndarray:
    def f(t: float) -> float:
        return math.cos((t / timesteps + offset) / (1 + offset) * math.pi / 2) ** 2

    betas = [min(1.0 - f(t + 1) / f(t), max_beta) for t in range(timesteps)]
    return np.asarray(betas, dtype=np.float64)


def linear_betas(timesteps: int, start: float = 1e-4, end: float = 0.02) -> np.ndarray:
    return np.linspace(start, end, timesteps, dtype=np.float64)


@dataclass(frozen=True)
class DiffusionSchedule:
    """
    Variance-preserving schedule: x_t = a_t·x0 + σ_t·ε with a_t = √ᾱ_t and
    σ_t = √(1 − ᾱ_t), indexed t = 0 … T−1. Kept in float64.
    """

    kind: ScheduleKind
    betas: np.ndarray
    alpha_bar: np.ndarray
    a: np.ndarray
    sigma: np.ndarray

    @classmethod
    def from_betas(cls, betas: np.ndarray, kind: ScheduleKind) -> "DiffusionSchedule":
        alpha_bar = np.cumprod(1.0 - betas)
        return cls(kind, betas, alpha_bar, np.sqrt(alpha_bar), np.sqrt(1.0 - alpha_bar))

    @classmethod
    def from_config(cls, cfg: DiffusionConfig) -> "DiffusionSchedule":
        if cfg.kind == ScheduleKind.COSINE:
            betas = cosine_betas(cfg.timesteps, cfg.cosine_offset, cfg.max_beta)
        else:
            betas = linear_betas(cfg.timesteps, cfg.beta_start, cfg.beta_end)
        return cls.from_betas(betas, cfg.kind)

    @property
    def timesteps(self) -> int:
        return int(self.betas.size)

    def check(self, t: Timesteps) -> np.ndarray:
        steps = np.asarray(t, dtype=np.int64)
        if steps.size and (steps.min() < 0 or steps.max() >= self.timesteps):
            raise TimestepError(f"timestep outside [0, {self.timesteps}): {t}")
        return steps

    def respaced(self, steps: int) -> np.ndarray:
        """Descending subset of `steps` timesteps spanning T−1 … 0."""
        if not 1 <= steps <= self.timesteps:
            raise TimestepError(f"sampling steps must lie in [1, {self.timesteps}], got {steps}")
        grid = np.linspace(self.timesteps - 1, 0, steps).round().astype(np.int64)
        return np.unique(grid)[::-1]
