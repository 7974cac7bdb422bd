"""
Synthetic paired histology / spatial transcriptomics generator.

Every sample is rendered from a handful of smooth latent "tissue region"
fields. Histology paints the regions with region colours plus texture noise;
each gene is a gene-specific nonlinear function of the same region fields
plus one field that histology never sees, plus independent noise. Both
modalities therefore share content while the ST side keeps a unique signal.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, List, Optional

import numpy as np
from pydantic import ValidationError

from ..core.errors import ManifestError, ShapeError
from ..core.models import DatasetManifest
from .sample import SpatialSample

logger = logging.getLogger(__name__)

BLOBS_PER_FIELD = 3
REGION_SHARPNESS = 4.0
GENE_GAIN = 3.0


def parse_manifest(**params: Any) -> DatasetManifest:
    """Build a manifest from loose parameters, reporting problems as ManifestError."""
    try:
        return DatasetManifest(**params)
    except ValidationError as e:
        raise ManifestError(f"Invalid dataset manifest: {e}") from e


def downsample(hr: np.ndarray, s: int) -> np.ndarray:
    """Block mean over s×s tiles of a G×H×W map."""
    if hr.ndim != 3:
        raise ShapeError("downsample needs a G×H×W map", [hr.shape])
    g, h, w = hr.shape
    if s < 1 or h % s or w % s:
        raise ShapeError(f"scale {s} does not divide the spatial extent", [hr.shape])
    blocks = hr.reshape(g, h // s, s, w // s, s).astype(np.float64)
    return blocks.mean(axis=(2, 4)).astype(np.float32)


@dataclass(frozen=True)
class _Blueprint:
    """Dataset-wide constants drawn once from the manifest seed."""

    gene_ids: List[int]
    colors: np.ndarray  # regions × 3
    weights: np.ndarray  # genes × regions
    unique_weight: np.ndarray  # genes
    bias: np.ndarray  # genes


@dataclass
class _Rendered:
    histology: np.ndarray
    latent: np.ndarray
    raw_hr: np.ndarray
    present: bool


def _blueprint(manifest: DatasetManifest) -> _Blueprint:
    rng = np.random.default_rng(manifest.seed)
    gene_ids = sorted(int(i) for i in rng.choice(manifest.gene_panel_size, manifest.genes, replace=False))
    colors = rng.uniform(0.15, 0.9, (manifest.regions, 3))
    weights = rng.normal(0.0, 1.0, (manifest.genes, manifest.regions))
    unique_weight = rng.uniform(0.3, 0.8, manifest.genes)
    bias = rng.normal(0.0, 0.5, manifest.genes)
    return _Blueprint(gene_ids, colors, weights, unique_weight, bias)


def _blob_field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    field = np.zeros((h, w))
    for _ in range(BLOBS_PER_FIELD):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        width = rng.uniform(min(h, w) / 8.0, min(h, w) / 4.0)
        field += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * width**2))
    return field / field.max()


def _render(manifest: DatasetManifest, blueprint: _Blueprint, index: int) -> _Rendered:
    rng = np.random.default_rng([manifest.seed, index])
    h, w = manifest.height, manifest.width
    regions = np.stack([_blob_field(rng, h, w) for _ in range(manifest.regions)])
    unique = np.stack([_blob_field(rng, h, w) for _ in range(manifest.genes)])

    logits = REGION_SHARPNESS * regions
    membership = np.exp(logits - logits.max(axis=0, keepdims=True))
    membership /= membership.sum(axis=0, keepdims=True)
    histology = np.einsum("rc,rhw->chw", blueprint.colors, membership)
    histology = histology + manifest.histology_noise * rng.normal(size=histology.shape)

    drive = np.einsum("gr,rhw->ghw", blueprint.weights, regions)
    drive = drive + blueprint.unique_weight[:, None, None] * unique
    latent = 1.0 / (1.0 + np.exp(-(GENE_GAIN * drive + blueprint.bias[:, None, None])))
    raw_hr = latent + manifest.expression_noise * rng.normal(size=latent.shape)

    present = bool(rng.random() >= manifest.missing_fraction)
    return _Rendered(np.clip(histology, 0.0, 1.0), latent, raw_hr, present)


def _render_all(manifest: DatasetManifest, workers: int) -> List[_Rendered]:
    blueprint = _blueprint(manifest)
    indices = range(manifest.n_samples)
    if workers <= 1:
        return [_render(manifest, blueprint, i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: _render(manifest, blueprint, i), indices))


def gene_panel(manifest: DatasetManifest) -> List[int]:
    return list(_blueprint(manifest).gene_ids)


def generate(manifest: DatasetManifest, workers: Optional[int] = None) -> List[SpatialSample]:
    """
    Render manifest.n_samples paired records.

    Expression is min-max normalised per gene over the whole dataset, then the
    LR map is the block mean of the normalised HR map. Samples are seeded by
    (seed, index), so the output does not depend on the worker count.
    """
    workers = workers or 1
    rendered = _render_all(manifest, workers)
    blueprint_ids = gene_panel(manifest)

    stacked = np.stack([r.raw_hr for r in rendered])
    low = stacked.min(axis=(0, 2, 3))[:, None, None]
    span = (stacked.max(axis=(0, 2, 3)) - stacked.min(axis=(0, 2, 3)))[:, None, None]
    span = np.where(span > 0, span, 1.0)

    samples: List[SpatialSample] = []
    for i, r in enumerate(rendered):
        hr = np.clip((r.raw_hr - low) / span, 0.0, 1.0).astype(np.float32)
        lr = downsample(hr, manifest.scale) if r.present else None
        samples.append(
            SpatialSample(
                sample_id=f"s{manifest.seed}-{i:05d}",
                gene_ids=blueprint_ids,
                histology=r.histology.astype(np.float32),
                hr_st=hr,
                lr_st=lr,
            )
        )
    missing = sum(1 for s in samples if not s.has_lr)
    logger.info(
        f"Generated {len(samples)} samples ({manifest.height}x{manifest.width}, "
        f"{manifest.genes} genes, scale {manifest.scale}, {missing} without LR ST)"
    )
    return samples


def latent_fields(manifest: DatasetManifest, workers: Optional[int] = None) -> np.ndarray:
    """Noise-free generating field of every gene, N×G×H×W, before normalisation."""
    rendered = _render_all(manifest, workers or 1)
    return np.stack([r.latent for r in rendered]).astype(np.float64)
