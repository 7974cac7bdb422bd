from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from ..core.errors import ShapeError
from .sample import SpatialSample


@dataclass
class Batch:
    """Samples stacked along a leading batch axis; absent LR maps are zeros."""

    sample_ids: List[str]
    gene_ids: List[List[int]]
    histology: np.ndarray  # N×3×H×W
    hr_st: np.ndarray  # N×G×H×W
    lr_st: np.ndarray  # N×G×h×w
    present: np.ndarray  # N booleans
    scale: int

    def __len__(self) -> int:
        return len(self.sample_ids)

    @property
    def present_count(self) -> int:
        return int(self.present.sum())

    def select(self, rows: Sequence[int]) -> "Batch":
        idx = np.asarray(rows, dtype=np.int64)
        return Batch(
            sample_ids=[self.sample_ids[i] for i in idx],
            gene_ids=[self.gene_ids[i] for i in idx],
            histology=self.histology[idx],
            hr_st=self.hr_st[idx],
            lr_st=self.lr_st[idx],
            present=self.present[idx],
            scale=self.scale,
        )

    def without_lr(self) -> "Batch":
        """Copy with every LR map replaced by zeros and marked absent."""
        return Batch(
            sample_ids=list(self.sample_ids),
            gene_ids=list(self.gene_ids),
            histology=self.histology,
            hr_st=self.hr_st,
            lr_st=np.zeros_like(self.lr_st),
            present=np.zeros_like(self.present),
            scale=self.scale,
        )


def collate(samples: Sequence[SpatialSample], scale: int) -> Batch:
    """Stack samples into a Batch; every sample must share H, W, G and scale."""
    if not samples:
        raise ShapeError("cannot collate an empty sample list")
    g = samples[0].genes
    h, w = samples[0].spatial_shape
    if h % scale or w % scale:
        raise ShapeError(f"scale {scale} does not divide the spatial extent", [(h, w)])
    lr = np.zeros((len(samples), g, h // scale, w // scale), dtype=np.float32)
    for i, sample in enumerate(samples):
        if sample.genes != g or sample.spatial_shape != (h, w):
            raise ShapeError(
                f"sample {sample.sample_id} does not match the batch geometry",
                [(g, h, w), sample.hr_st.shape],
            )
        if sample.lr_st is not None:
            if sample.lr_st.shape != lr.shape[1:]:
                raise ShapeError(f"sample {sample.sample_id} has a different LR scale", [sample.lr_st.shape, lr.shape[1:]])
            lr[i] = sample.lr_st
    return Batch(
        sample_ids=[s.sample_id for s in samples],
        gene_ids=[list(s.gene_ids) for s in samples],
        histology=np.stack([s.histology for s in samples]).astype(np.float32),
        hr_st=np.stack([s.hr_st for s in samples]).astype(np.float32),
        lr_st=lr,
        present=np.array([s.has_lr for s in samples], dtype=bool),
        scale=scale,
    )


def split_samples(
    samples: Sequence[SpatialSample], val_fraction: float
) -> Tuple[List[SpatialSample], List[SpatialSample]]:
    """The last val_fraction of samples by index form the validation split."""
    n_val = int(round(val_fraction * len(samples)))
    n_val = min(n_val, len(samples) - 1) if len(samples) > 1 else 0
    cut = len(samples) - n_val
    return list(samples[:cut]), list(samples[cut:])


def draw_batch(
    samples: Sequence[SpatialSample], batch_size: int, scale: int, rng: np.random.Generator
) -> Batch:
    """Uniformly draw batch_size distinct samples (all of them if fewer)."""
    size = min(batch_size, len(samples))
    rows = np.sort(rng.choice(len(samples), size=size, replace=False))
    return collate([samples[i] for i in rows], scale)


def iter_batches(samples: Sequence[SpatialSample], batch_size: int, scale: int) -> Iterator[Batch]:
    for start in range(0, len(samples), batch_size):
        yield collate(samples[start:start + batch_size], scale)
