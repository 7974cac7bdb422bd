import zlib
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from ..core.errors import ShapeError
from ..nets.denoiser import NoisePredictor
from ..nets.encoders import ConditionBundle
from ..tensor import DTYPE, Tensor, mse
from .schedule import DiffusionSchedule, Timesteps


def forward_noise(
    x0: Union[Tensor, np.ndarray], t: Timesteps, eps: Union[Tensor, np.ndarray], schedule: DiffusionSchedule
) -> Tensor:
    """
    x_t = a_t·x0 + σ_t·ε. t is a single step or one step per row of a
    batched (N×…) x0.
    """
    x = np.asarray(x0.data if isinstance(x0, Tensor) else x0, dtype=DTYPE)
    e = np.asarray(eps.data if isinstance(eps, Tensor) else eps, dtype=DTYPE)
    if x.shape != e.shape:
        raise ShapeError("eps must have the shape of x0", [x.shape, e.shape])
    steps = schedule.check(t)
    a = schedule.a[steps].astype(DTYPE)
    s = schedule.sigma[steps].astype(DTYPE)
    if steps.ndim == 1:
        if steps.size != x.shape[0]:
            raise ShapeError("one timestep per batch row expected", [steps.shape, x.shape])
        view = (-1,) + (1,) * (x.ndim - 1)
        a, s = a.reshape(view), s.reshape(view)
    return Tensor(a * x + s * e)


def noise_streams(sample_ids: Sequence[str], seed: int, step: int) -> List[np.random.Generator]:
    """One generator per sample, keyed by (seed, step, sample id)."""
    return [
        np.random.default_rng([seed, step, zlib.crc32(sid.encode("utf-8"))]) for sid in sample_ids
    ]


@dataclass
class NoiseDraw:
    t: np.ndarray
    eps: np.ndarray
    dropped: np.ndarray


def draw_noise(
    streams: Sequence[np.random.Generator], shape: Sequence[int], timesteps: int, drop_prob: float
) -> NoiseDraw:
    """Per-sample timestep, Gaussian noise and condition-drop decision."""
    t = np.empty(len(streams), dtype=np.int64)
    eps = np.empty((len(streams), *shape), dtype=DTYPE)
    dropped = np.zeros(len(streams), dtype=bool)
    for i, rng in enumerate(streams):
        t[i] = rng.integers(0, timesteps)
        eps[i] = rng.standard_normal(tuple(shape))
        dropped[i] = rng.random() < drop_prob
    return NoiseDraw(t, eps, dropped)


def mse_step(
    denoiser: NoisePredictor,
    x0: np.ndarray,
    bundle: ConditionBundle,
    schedule: DiffusionSchedule,
    streams: Sequence[np.random.Generator],
    drop_prob: float,
) -> Tensor:
    """
    L_mse = mean ‖ε − ε_θ(a_t x0 + σ_t ε, E)‖² with one (t, ε) per sample;
    a drop_prob share of samples see the all-zero null condition instead.
    """
    if len(streams) != x0.shape[0]:
        raise ShapeError("one noise stream per sample expected", [(len(streams),), x0.shape])
    draw = draw_noise(streams, x0.shape[1:], schedule.timesteps, drop_prob)
    x_t = forward_noise(x0, draw.t, draw.eps, schedule)
    planes = bundle.planes
    if draw.dropped.any():
        keep = np.broadcast_to(
            (~draw.dropped).astype(DTYPE).reshape(-1, 1, 1, 1), planes.shape
        )
        planes = planes * Tensor(keep)
    prediction = denoiser(x_t, draw.t, planes)
    return mse(prediction, Tensor(draw.eps))


def guided_eps(
    denoiser: NoisePredictor,
    x_t: Tensor,
    t: np.ndarray,
    bundle: ConditionBundle,
    null_bundle: ConditionBundle,
    omega: float,
) -> Tensor:
    """ω·ε_θ(x_t, E) + (1 − ω)·ε_θ(x_t, ∅)."""
    if bundle.planes.shape != null_bundle.planes.shape:
        raise ShapeError("condition and null bundles differ in shape", [bundle.planes.shape, null_bundle.planes.shape])
    if omega == 1:
        return denoiser(x_t, t, bundle.planes)
    if omega == 0:
        return denoiser(x_t, t, null_bundle.planes)
    cond = denoiser(x_t, t, bundle.planes)
    uncond = denoiser(x_t, t, null_bundle.planes)
    return cond.scale(omega) + uncond.scale(1.0 - omega)
