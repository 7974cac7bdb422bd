import logging

import numpy as np

from ..nets.denoiser import NoisePredictor
from ..nets.encoders import ConditionBundle
from ..tensor import DTYPE, Tensor, no_grad
from .process import guided_eps
from .schedule import DiffusionSchedule

logger = logging.getLogger(__name__)


def sample(
    denoiser: NoisePredictor,
    bundle: ConditionBundle,
    schedule: DiffusionSchedule,
    omega: float,
    steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Ancestral reverse chain from pure noise over `steps` respaced timesteps.

    At every step the x̂0 estimate implied by the guided ε is clipped to [0, 1];
    the last step returns x̂0 itself. Output is N×G×H×W within [0, 1].
    """
    n, _, height, width = bundle.planes.shape
    shape = (n, bundle.genes, height, width)
    null_bundle = bundle.null()
    timeline = schedule.respaced(steps)
    x = rng.standard_normal(shape)

    with no_grad():
        for i, t in enumerate(timeline):
            t_batch = np.full(n, t, dtype=np.int64)
            eps = guided_eps(denoiser, Tensor(x), t_batch, bundle, null_bundle, omega).data
            ab_t = schedule.alpha_bar[t]
            x0_hat = np.clip((x - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t), 0.0, 1.0)
            if i == len(timeline) - 1:
                x = x0_hat
                break
            ab_s = schedule.alpha_bar[timeline[i + 1]]
            beta = 1.0 - ab_t / ab_s
            mean = (
                np.sqrt(ab_s) * beta / (1.0 - ab_t) * x0_hat
                + np.sqrt(1.0 - beta) * (1.0 - ab_s) / (1.0 - ab_t) * x
            )
            variance = beta * (1.0 - ab_s) / (1.0 - ab_t)
            x = mean + np.sqrt(variance) * rng.standard_normal(shape)

    return np.clip(x, 0.0, 1.0).astype(DTYPE)
