import math

import numpy as np

from ..core.models import RunConfig
from ..tensor import Module, Tensor
from ..tensor.nn import parameter
from .denoiser import Denoiser
from .encoders import EncoderBank


class EnhancerModel(Module):
    """Encoders, denoiser and the contrastive temperature of one run."""

    def __init__(self, config: RunConfig, genes: int, panel_size: int):
        rng = np.random.default_rng([config.seed, config.encoder.init_seed])
        self.encoders = EncoderBank(config.encoder, genes, panel_size, rng)
        self.denoiser = Denoiser(config.denoiser, genes, self.encoders.condition_channels, rng)
        log_tau = np.array(math.log(config.contrastive.tau_init))
        if config.contrastive.learnable_tau:
            self.log_tau = parameter(log_tau)
        else:
            self.log_tau = Tensor(log_tau)

    def tau(self) -> Tensor:
        """τ = exp(log τ), positive by construction."""
        return self.log_tau.exp()
