import math
from typing import Protocol

import numpy as np

from ..core.errors import ShapeError
from ..core.models import DenoiserConfig
from ..tensor import (
    Conv2d,
    Linear,
    Module,
    Tensor,
    avg_pool2d,
    concat,
    expand,
    upsample_nearest,
)


class NoisePredictor(Protocol):
    """Anything mapping (x_t, timesteps, condition planes) to an ε estimate."""

    def __call__(self, x_t: Tensor, t: np.ndarray, condition: Tensor) -> Tensor: ...


def timestep_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, N×dim."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / max(half, 1))
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb.astype(np.float32)


def _add_time(x: Tensor, t_vec: Tensor) -> Tensor:
    n, c, h, w = x.shape
    return x + expand(t_vec.reshape(n, c, 1, 1), x.shape)


class Denoiser(Module):
    """
    Two-level conv UNet predicting ε from x_t and the conditioning planes.
    The timestep embedding passes through a small MLP and is added after
    the first convolution of every block.
    """

    def __init__(self, config: DenoiserConfig, genes: int, condition_channels: int, rng: np.random.Generator):
        b = config.base_width
        self.time_dim = config.time_embedding_dim
        self.time_mlp = Linear(self.time_dim, self.time_dim, rng)
        self.time_down = Linear(self.time_dim, b, rng)
        self.time_mid = Linear(self.time_dim, 2 * b, rng)
        self.time_up = Linear(self.time_dim, b, rng)
        self.enc_in = Conv2d(genes + condition_channels, b, rng)
        self.enc_out = Conv2d(b, b, rng)
        self.mid_in = Conv2d(b, 2 * b, rng)
        self.mid_out = Conv2d(2 * b, 2 * b, rng)
        self.dec_in = Conv2d(3 * b, b, rng)
        self.dec_out = Conv2d(b, genes, rng)
        self.genes = genes
        self.condition_channels = condition_channels

    def __call__(self, x_t: Tensor, t: np.ndarray, condition: Tensor) -> Tensor:
        if x_t.ndim != 4 or x_t.shape[1] != self.genes:
            raise ShapeError(f"denoiser expects N×{self.genes}×H×W input", [x_t.shape])
        if condition.shape != (x_t.shape[0], self.condition_channels, *x_t.shape[2:]):
            raise ShapeError("condition planes do not match x_t", [x_t.shape, condition.shape])

        temb = self.time_mlp(Tensor(timestep_embedding(t, self.time_dim))).relu()
        h = _add_time(self.enc_in(concat([x_t, condition], axis=1)), self.time_down(temb)).relu()
        skip = self.enc_out(h).relu()

        pooled = skip.shape[2] % 2 == 0 and skip.shape[3] % 2 == 0
        h = avg_pool2d(skip, 2) if pooled else skip
        h = _add_time(self.mid_in(h), self.time_mid(temb)).relu()
        h = self.mid_out(h).relu()
        if pooled:
            h = upsample_nearest(h, 2)

        h = _add_time(self.dec_in(concat([h, skip], axis=1)), self.time_up(temb)).relu()
        return self.dec_out(h)
