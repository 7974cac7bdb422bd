"""
Modality / content encoders for histology and LR ST, the gene-code table and
the fusion of all of them into the denoiser's conditioning planes.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ShapeError
from ..core.models import EncoderConfig
from ..tensor import (
    Conv2d,
    Embedding,
    Linear,
    Module,
    Tensor,
    avg_pool2d,
    concat,
    expand,
    normalize_rows,
    take_rows,
    upsample_nearest,
)


class ConvEncoder(Module):
    """
    Three (conv 3×3 → relu → 2× average pool) blocks, global mean pool and an
    affine head to D. Pooling is skipped once a map no longer halves evenly,
    so 8×8 (5×) and 4×4 (10×) LR maps are both valid inputs.
    """

    def __init__(self, in_channels: int, widths: Sequence[int], feature_dim: int, rng: np.random.Generator):
        channels = [in_channels, *widths]
        self.blocks = [Conv2d(channels[i], channels[i + 1], rng) for i in range(len(widths))]
        self.head = Linear(channels[-1], feature_dim, rng)
        self.in_channels = in_channels

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"encoder expects N×{self.in_channels}×H×W input", [x.shape])
        for conv in self.blocks:
            x = conv(x).relu()
            if x.shape[2] % 2 == 0 and x.shape[3] % 2 == 0:
                x = avg_pool2d(x, 2)
        return self.head(x.mean(axis=(2, 3)))


@dataclass
class RawFeatures:
    """Unit-norm encoder outputs; ST rows exist only for samples with LR ST."""

    M_h: Tensor
    C_h: Tensor
    M_y: Optional[Tensor]
    C_y: Optional[Tensor]
    present: np.ndarray

    @property
    def present_rows(self) -> np.ndarray:
        return np.flatnonzero(self.present)


@dataclass
class EmbeddingSet:
    """
    Batch embeddings after augmentation and imputation.

    M_y_hat / C_y_hat hold one row per sample: augmented features where LR ST
    exists, imputed (or zero) rows elsewhere.
    """

    M_h: Tensor
    C_h: Tensor
    M_y_hat: Tensor
    C_y_hat: Tensor
    present_mask: np.ndarray

    def __len__(self) -> int:
        return self.M_h.shape[0]


@dataclass
class ConditionBundle:
    """N×C×H×W conditioning planes consumed by the denoiser."""

    planes: Tensor
    condition_planes: int
    genes: int
    gene_planes: int

    @property
    def channels(self) -> int:
        return self.planes.shape[1]

    def y_channels(self) -> np.ndarray:
        start = self.condition_planes
        return self.planes.data[:, start:start + self.genes]

    def null(self) -> "ConditionBundle":
        return ConditionBundle(
            Tensor(np.zeros(self.planes.shape)), self.condition_planes, self.genes, self.gene_planes
        )

    def select(self, rows: Sequence[int]) -> "ConditionBundle":
        return ConditionBundle(
            take_rows(self.planes, rows), self.condition_planes, self.genes, self.gene_planes
        )


class EncoderBank(Module):
    """The four feature encoders, the gene table and the condition projection."""

    def __init__(self, config: EncoderConfig, genes: int, panel_size: int, rng: np.random.Generator):
        d = config.feature_dim
        self.hist_modal = ConvEncoder(3, config.widths, d, rng)
        self.hist_content = ConvEncoder(3, config.widths, d, rng)
        self.st_modal = ConvEncoder(genes, config.widths, d, rng)
        self.st_content = ConvEncoder(genes, config.widths, d, rng)
        self.gene_table = Embedding(panel_size, config.gene_embedding_dim, rng)
        self.fuse = Linear(4 * d, config.condition_planes, rng)
        self.config = config
        self.genes = genes

    @property
    def condition_channels(self) -> int:
        return self.config.condition_planes + self.genes + self.config.gene_embedding_dim


def norm_project(v: Tensor) -> Tensor:
    """Project a D-vector (or every row of an N×D matrix) onto the unit sphere."""
    if v.ndim == 1:
        return normalize_rows(v.reshape(1, v.shape[0])).reshape(v.shape[0])
    return normalize_rows(v)


def encode(bank: EncoderBank, histology: np.ndarray, lr_st: np.ndarray, present: np.ndarray) -> RawFeatures:
    """
    Run the four encoders on a batch. Histology is N×3×H×W; lr_st is
    N×G×h×w with rows for absent samples ignored.
    """
    h = Tensor(histology)
    M_h = normalize_rows(bank.hist_modal(h))
    C_h = normalize_rows(bank.hist_content(h))
    present = np.asarray(present, dtype=bool)
    if lr_st.shape[0] != histology.shape[0] or present.shape[0] != histology.shape[0]:
        raise ShapeError("histology, lr_st and present mask disagree on batch size",
                         [histology.shape, lr_st.shape, present.shape])
    rows = np.flatnonzero(present)
    if rows.size == 0:
        return RawFeatures(M_h, C_h, None, None, present)
    y = Tensor(lr_st[rows])
    M_y = normalize_rows(bank.st_modal(y))
    C_y = normalize_rows(bank.st_content(y))
    return RawFeatures(M_h, C_h, M_y, C_y, present)


def augment(
    M_y: Tensor, C_y: Tensor, sigma: float, rng: np.random.Generator
) -> Tuple[Tensor, Tensor]:
    """
    Hypersphere noise augmentation: add independent N(0, sigma²) noise to each
    head and re-normalise. sigma = 0 returns the inputs unchanged.
    """
    if sigma == 0:
        return M_y, C_y
    noise_m = rng.normal(0.0, sigma, M_y.shape)
    noise_c = rng.normal(0.0, sigma, C_y.shape)
    return norm_project(M_y + Tensor(noise_m)), norm_project(C_y + Tensor(noise_c))


def _gene_planes(bank: EncoderBank, gene_ids: Sequence[Sequence[int]]) -> Tensor:
    n = len(gene_ids)
    g = len(gene_ids[0])
    flat: List[int] = [code for panel in gene_ids for code in panel]
    if len(flat) != n * g:
        raise ShapeError("every sample must list the same number of gene ids")
    table = bank.gene_table(flat).reshape(n, g, bank.config.gene_embedding_dim)
    return table.mean(axis=1)


def build_condition(
    bank: EncoderBank,
    embeddings: EmbeddingSet,
    lr_st: np.ndarray,
    gene_ids: Sequence[Sequence[int]],
    hr_shape: Tuple[int, int],
) -> ConditionBundle:
    """
    Fuse the embeddings, the upsampled LR map and the gene panel into
    condition_planes + G + gene_embedding_dim planes of size H×W.
    Rows of lr_st for absent samples must already be zero.
    """
    n = len(embeddings)
    if lr_st.shape[0] != n or len(gene_ids) != n:
        raise ShapeError(
            "embeddings, LR maps and gene ids disagree on batch size",
            [(n,), lr_st.shape, (len(gene_ids),)],
        )
    height, width = hr_shape
    if height % lr_st.shape[2] or width % lr_st.shape[3]:
        raise ShapeError("LR grid does not divide the HR grid", [lr_st.shape, hr_shape])
    scale = height // lr_st.shape[2]
    planes = bank.config.condition_planes
    emb_dim = bank.config.gene_embedding_dim

    fused = bank.fuse(
        concat([embeddings.M_h, embeddings.C_h, embeddings.M_y_hat, embeddings.C_y_hat], axis=1)
    )
    fused_planes = expand(fused.reshape(n, planes, 1, 1), (n, planes, height, width))
    y_planes = upsample_nearest(Tensor(lr_st), scale)
    gene = _gene_planes(bank, gene_ids)
    gene_planes = expand(gene.reshape(n, emb_dim, 1, 1), (n, emb_dim, height, width))
    bundle = concat([fused_planes, y_planes, gene_planes], axis=1)
    return ConditionBundle(bundle, planes, lr_st.shape[1], emb_dim)
