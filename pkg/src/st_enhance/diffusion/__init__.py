from .process import NoiseDraw, draw_noise, forward_noise, guided_eps, mse_step, noise_streams
from .sampler import sample
from .schedule import DiffusionSchedule, cosine_betas, linear_betas

__all__ = [
    "DiffusionSchedule",
    "NoiseDraw",
    "cosine_betas",
    "draw_noise",
    "forward_noise",
    "guided_eps",
    "linear_betas",
    "mse_step",
    "noise_streams",
    "sample",
]
