import logging
from typing import List, Optional, Sequence

import numpy as np

from ..core.errors import CorrelationUndefinedError, ShapeError
from ..core.models import GeneCorrelationMatrix

logger = logging.getLogger(__name__)


def _per_gene(array: np.ndarray) -> np.ndarray:
    """Reshape G×H×W or N×G×H×W into G × (observations), float64."""
    a = np.asarray(array, dtype=np.float64)
    if a.ndim == 3:
        return a.reshape(a.shape[0], -1)
    if a.ndim == 4:
        return np.moveaxis(a, 1, 0).reshape(a.shape[1], -1)
    raise ShapeError("expected a G×H×W map or an N×G×H×W batch", [a.shape])


def _pair(pred: np.ndarray, truth: np.ndarray) -> tuple:
    p, t = np.asarray(pred), np.asarray(truth)
    if p.shape != t.shape:
        raise ShapeError("prediction and truth shapes differ", [p.shape, t.shape])
    return _per_gene(p), _per_gene(t)


def rmse(pred: np.ndarray, truth: np.ndarray) -> List[float]:
    """Per-gene root-mean-square error over all spatial positions (and samples)."""
    p, t = _pair(pred, truth)
    return [float(v) for v in np.sqrt(np.mean((p - t) ** 2, axis=1))]


def pearson(pred: np.ndarray, truth: np.ndarray) -> float:
    """Pearson correlation of two flattened maps; undefined for constant inputs."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    pc, tc = p - p.mean(), t - t.mean()
    t_norm = np.sqrt(np.sum(tc * tc))
    p_norm = np.sqrt(np.sum(pc * pc))
    if t_norm == 0:
        raise CorrelationUndefinedError("truth map is constant")
    if p_norm == 0:
        raise CorrelationUndefinedError("prediction map is constant")
    return float(np.clip(np.sum(pc * tc) / (p_norm * t_norm), -1.0, 1.0))


def pcc(pred: np.ndarray, truth: np.ndarray) -> List[Optional[float]]:
    """Per-gene Pearson correlation; genes where it is undefined are None."""
    p, t = _pair(pred, truth)
    values: List[Optional[float]] = []
    for g in range(p.shape[0]):
        try:
            values.append(pearson(p[g], t[g]))
        except CorrelationUndefinedError as e:
            logger.warning(f"PCC undefined for gene position {g}: {e}")
            values.append(None)
    return values


def gene_correlation(preds: np.ndarray, gene_ids: Sequence[int]) -> GeneCorrelationMatrix:
    """
    G×G Pearson matrix over all pooled pixels. Zero-variance genes are listed
    in `absent` and their rows and columns hold None.
    """
    obs = _per_gene(preds)
    if obs.shape[0] != len(gene_ids):
        raise ShapeError("gene ids do not match the channel count", [obs.shape, (len(gene_ids),)])
    if obs.shape[1] < 2:
        raise ShapeError("gene correlation needs at least 2 observations", [obs.shape])
    centered = obs - obs.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered * centered, axis=1))
    defined = norms > 0
    g = obs.shape[0]
    matrix: List[List[Optional[float]]] = [[None] * g for _ in range(g)]
    unit = centered[defined] / norms[defined, None]
    corr = np.clip(unit @ unit.T, -1.0, 1.0)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    rows = np.flatnonzero(defined)
    for a, i in enumerate(rows):
        for b, j in enumerate(rows):
            matrix[i][j] = float(corr[a, b])
    absent = [int(i) for i in np.flatnonzero(~defined)]
    return GeneCorrelationMatrix(gene_ids=list(gene_ids), matrix=matrix, absent=absent)


def gec_distance(a: GeneCorrelationMatrix, b: GeneCorrelationMatrix) -> float:
    """Frobenius norm of a − b over the entries defined in both matrices."""
    x, y = a.as_array(), b.as_array()
    if x.shape != y.shape:
        raise ShapeError("correlation matrices differ in size", [x.shape, y.shape])
    both = ~(np.isnan(x) | np.isnan(y))
    return float(np.sqrt(np.sum((x[both] - y[both]) ** 2)))
