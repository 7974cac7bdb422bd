from .batch import Batch, collate, draw_batch, iter_batches, split_samples
from .dataset import load_dataset, read_dataset, save_dataset
from .sample import SpatialSample
from .synth import downsample, gene_panel, generate, latent_fields, parse_manifest

__all__ = [
    "Batch",
    "SpatialSample",
    "collate",
    "draw_batch",
    "iter_batches",
    "split_samples",
    "save_dataset",
    "load_dataset",
    "read_dataset",
    "generate",
    "downsample",
    "gene_panel",
    "latent_fields",
    "parse_manifest",
]
