from .denoiser import Denoiser, NoisePredictor, timestep_embedding
from .encoders import (
    ConditionBundle,
    ConvEncoder,
    EmbeddingSet,
    EncoderBank,
    RawFeatures,
    augment,
    build_condition,
    encode,
    norm_project,
)
from .model import EnhancerModel

__all__ = [
    "ConditionBundle",
    "ConvEncoder",
    "Denoiser",
    "EmbeddingSet",
    "EncoderBank",
    "EnhancerModel",
    "NoisePredictor",
    "RawFeatures",
    "augment",
    "build_condition",
    "encode",
    "norm_project",
    "timestep_embedding",
]
