"""
Contrastive objectives on unit-hypersphere features.

All three losses use InfoNCE with the batch as the sample space. The
vectorised forms below agree with the explicit pair enumeration in
`enumerate_pairs` / `reference_loss`, which is kept as the readable
definition of every positive / negative set.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple, Union

import numpy as np

from .core.errors import BatchTooSmallError, EmptyPairSetError, ShapeError
from .tensor import Tensor, as_tensor, concat, expand, logsumexp_rows, matmul

logger = logging.getLogger(__name__)

Temperature = Union[Tensor, float]

# additive logit mask; exp() of it underflows to exactly 0 in float32
_MASKED = -1e9


class PairLoss(str, Enum):
    MODAL = "modal"
    CONTENT = "content"
    INTER_SPHERE = "inter_sphere"


FeatureRef = Tuple[str, int]


@dataclass(frozen=True)
class PairScheme:
    """One anchor with its positive and negative feature references."""

    anchor: FeatureRef
    positives: Tuple[FeatureRef, ...]
    negatives: Tuple[FeatureRef, ...]

    def __post_init__(self) -> None:
        if set(self.positives) & set(self.negatives):
            raise ValueError(f"positives and negatives overlap for anchor {self.anchor}")
        if self.anchor in self.positives or self.anchor in self.negatives:
            raise ValueError(f"anchor {self.anchor} is paired with itself")


def enumerate_pairs(loss: PairLoss, n: int) -> List[List[PairScheme]]:
    """
    P/N construction per loss, grouped by direction. Each inner list holds one
    scheme per anchor; a loss value is the sum over directions of the mean
    over anchors of the mean over positives.
    """
    idx = range(n)
    if loss == PairLoss.MODAL:
        return [
            [
                PairScheme(
                    (a, j),
                    tuple((a, k) for k in idx if k != j),
                    tuple((b, k) for k in idx),
                )
                for j in idx
            ]
            for a, b in (("M_h", "M_y"), ("M_y", "M_h"))
        ]
    if loss == PairLoss.CONTENT:
        return [
            [
                PairScheme(
                    (a, j),
                    ((b, j),),
                    tuple((b, k) for k in idx if k != j) + tuple((a, k) for k in idx if k != j),
                )
                for j in idx
            ]
            for a, b in (("C_h", "C_y"), ("C_y", "C_h"))
        ]
    return [
        [
            PairScheme(("M_h", j), (("C_h", j),), tuple(("C_h", k) for k in idx if k != j))
            for j in idx
        ]
    ]


def info_nce(z: Tensor, positives: Tensor, negatives: Tensor, tau: Temperature) -> Tensor:
    """
    Mean over positives of −log(exp(z·z⁺/τ) / (exp(z·z⁺/τ) + Σ_k exp(z·z⁻_k/τ))).
    z is a D-vector; positives P×D; negatives K×D.
    """
    if positives.ndim != 2 or positives.shape[0] == 0:
        raise EmptyPairSetError("info_nce needs at least one positive")
    if negatives.ndim != 2 or negatives.shape[0] == 0:
        raise EmptyPairSetError("info_nce needs at least one negative")
    d = z.shape[-1]
    if positives.shape[1] != d or negatives.shape[1] != d:
        raise ShapeError("info_nce feature dimensions disagree", [z.shape, positives.shape, negatives.shape])
    tau = as_tensor(tau)
    column = z.reshape(d, 1)
    pos = matmul(positives, column) / tau  # P×1
    neg = (matmul(negatives, column) / tau).reshape(1, negatives.shape[0])
    p = positives.shape[0]
    logits = concat([pos, expand(neg, (p, negatives.shape[0]))], axis=1)
    return (logsumexp_rows(logits) - pos.reshape(p)).mean()


def _check_pair(a: Tensor, b: Tensor, name: str) -> int:
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"{name} needs two N×D matrices of equal shape", [a.shape, b.shape])
    n = a.shape[0]
    if n < 2:
        raise BatchTooSmallError(f"{name} needs at least 2 samples, got {n}")
    return n


def _diagonal(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise dot products a_j·b_j."""
    return (a * b).sum(axis=1)


def _modal_direction(anchors: Tensor, others: Tensor, tau: Tensor) -> Tensor:
    n = anchors.shape[0]
    same = matmul(anchors, anchors.T) / tau  # positives off the diagonal
    cross_lse = logsumexp_rows(matmul(anchors, others.T) / tau)  # all N negatives
    pair_logits = concat(
        [same.reshape(n * n, 1), expand(cross_lse.reshape(n, 1), (n, n)).reshape(n * n, 1)],
        axis=1,
    )
    terms = logsumexp_rows(pair_logits) - same.reshape(n * n)
    off_diagonal = (1.0 - np.eye(n, dtype=np.float32)).reshape(n * n)
    return (terms * Tensor(off_diagonal)).sum().scale(1.0 / (n * (n - 1)))


def loss_modal(M_h: Tensor, M_y_hat: Tensor, tau: Temperature) -> Tensor:
    """Cross-modal loss: same-modality rows are positives, the other modality negatives."""
    _check_pair(M_h, M_y_hat, "loss_modal")
    tau = as_tensor(tau)
    return _modal_direction(M_h, M_y_hat, tau) + _modal_direction(M_y_hat, M_h, tau)


def _content_direction(anchors: Tensor, partners: Tensor, tau: Tensor) -> Tensor:
    n = anchors.shape[0]
    cross = matmul(anchors, partners.T) / tau  # diagonal: positive
    same = matmul(anchors, anchors.T) / tau + Tensor(_MASKED * np.eye(n, dtype=np.float32))
    lse = logsumexp_rows(concat([cross, same], axis=1))
    return (lse - _diagonal(anchors, partners) / tau).mean()


def loss_content(C_h: Tensor, C_y_hat: Tensor, tau: Temperature) -> Tensor:
    """Symmetric CLIP-style loss with 2(N−1) negatives per anchor."""
    _check_pair(C_h, C_y_hat, "loss_content")
    tau = as_tensor(tau)
    return _content_direction(C_h, C_y_hat, tau) + _content_direction(C_y_hat, C_h, tau)


def loss_inter_sphere(M_h: Tensor, C_h: Tensor, tau: Temperature) -> Tensor:
    """Anchor [M_h]_j, positive [C_h]_j, negatives [C_h]_k for k ≠ j; one direction."""
    _check_pair(M_h, C_h, "loss_inter_sphere")
    tau = as_tensor(tau)
    logits = matmul(M_h, C_h.T) / tau
    return (logsumexp_rows(logits) - _diagonal(M_h, C_h) / tau).mean()


def reference_loss(loss: PairLoss, features: Dict[str, Tensor], tau: Temperature) -> Tensor:
    """Evaluate a loss by looping info_nce over every scheme of enumerate_pairs."""
    n = next(iter(features.values())).shape[0]
    total = None
    for direction in enumerate_pairs(loss, n):
        per_anchor = []
        for scheme in direction:
            name, row = scheme.anchor
            z = features[name].data[row]
            pos = np.stack([features[s].data[k] for s, k in scheme.positives])
            neg = np.stack([features[s].data[k] for s, k in scheme.negatives])
            per_anchor.append(info_nce(Tensor(z), Tensor(pos), Tensor(neg), tau).item())
        term = Tensor(np.mean(per_anchor, dtype=np.float64))
        total = term if total is None else total + term
    assert total is not None
    return total


def alignment_uniformity(Z_a: Union[Tensor, np.ndarray], Z_b: Union[Tensor, np.ndarray], t: float = 2.0) -> Tuple[float, float]:
    """
    align = mean ‖a_i − b_i‖² over matched rows;
    uniform = log mean exp(−t‖a_i − b_j‖²) over cross pairs i ≠ j
    (NaN when there are no such pairs).
    """
    a = np.asarray(Z_a.data if isinstance(Z_a, Tensor) else Z_a, dtype=np.float64)
    b = np.asarray(Z_b.data if isinstance(Z_b, Tensor) else Z_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError("alignment_uniformity needs two N×D matrices", [a.shape, b.shape])
    align = float(np.mean(np.sum((a - b) ** 2, axis=1)))
    n = a.shape[0]
    if n < 2:
        return align, float("nan")
    sq = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    unmatched = sq[~np.eye(n, dtype=bool)]
    uniform = float(np.log(np.mean(np.exp(-t * unmatched))))
    return align, uniform
