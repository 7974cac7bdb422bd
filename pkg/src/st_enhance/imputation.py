import logging
import threading
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core.errors import ImputationImpossibleError, ShapeError
from .core.models import ImputationMode, ImputeConfig
from .tensor import Tensor, concat, matmul, softmax_rows, take_rows

logger = logging.getLogger(__name__)


class WeightCounter:
    """Counts similarity-weight computations; used to verify mode contracts."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._count = 0

    @property
    def count(self) -> int:
        return self._count

    def increment(self) -> None:
        with self._lock:
            self._count += 1

    def reset(self) -> None:
        with self._lock:
            self._count = 0


weight_computations = WeightCounter()


@dataclass
class Imputed:
    """Imputed ST rows for the missing samples, in increasing batch order."""

    M_tilde: Tensor
    C_tilde: Tensor
    missing_rows: np.ndarray
    weights_M: Optional[np.ndarray] = None
    weights_C: Optional[np.ndarray] = None


def decay(cfg: ImputeConfig, step: int, total_steps: Optional[int] = None) -> Tuple[float, float]:
    """
    Linear decay of (α, β) from (α₀, β₀) to exactly 0 at decay_steps, clamped
    afterwards. decay_steps falls back to decay_fraction · total_steps.
    """
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    if cfg.decay_steps is None and total_steps is None:
        raise ValueError("decay needs total_steps when decay_steps is not configured")
    horizon = cfg.resolved_decay_steps(total_steps or 0)
    if horizon <= 0 or step >= horizon:
        return 0.0, 0.0
    remaining = 1.0 - step / horizon
    return cfg.alpha0 * remaining, cfg.beta0 * remaining


def _weights(
    anchors: Tensor, bank: Tensor, tau1: float, mode: ImputationMode
) -> Tuple[Tensor, np.ndarray]:
    if mode == ImputationMode.ARITHMETIC_AVERAGE:
        uniform = np.full((anchors.shape[0], bank.shape[0]), 1.0 / bank.shape[0], dtype=np.float32)
        return Tensor(uniform), uniform
    weight_computations.increment()
    w = softmax_rows(matmul(anchors, bank.T).scale(1.0 / tau1))
    return w, w.data.copy()


def impute_rows(
    M_h: Tensor,
    C_h: Tensor,
    M_y_hat: Tensor,
    C_y_hat: Tensor,
    present_mask: np.ndarray,
    alpha: float,
    beta: float,
    tau1: float,
    mode: ImputationMode = ImputationMode.DYNAMIC,
) -> Imputed:
    """
    Fill the ST features of missing samples.

    M_y_hat / C_y_hat hold rows for present samples only, in batch order.
    M̃_y^l = α·Σ_k w_{k,l} M̂_y^k with w = softmax_k(M_h^l·M_h^k / τ₁) over
    present k; C̃_y uses C_h and β. Zero-padding mode, or α = 0 (β = 0),
    yields exact zero rows without computing any weights.
    """
    present = np.asarray(present_mask, dtype=bool)
    if present.shape != (M_h.shape[0],):
        raise ShapeError("present mask does not match the batch", [present.shape, M_h.shape])
    present_rows = np.flatnonzero(present)
    missing_rows = np.flatnonzero(~present)
    if M_y_hat.shape[0] != present_rows.size or C_y_hat.shape[0] != present_rows.size:
        raise ShapeError(
            "ST features must have one row per present sample",
            [M_y_hat.shape, C_y_hat.shape, (present_rows.size,)],
        )
    d = M_h.shape[1]
    zeros = Tensor(np.zeros((missing_rows.size, d)))
    if missing_rows.size == 0 or mode == ImputationMode.ZERO_PADDING:
        return Imputed(zeros, zeros, missing_rows)
    if alpha == 0 and beta == 0:
        return Imputed(zeros, zeros, missing_rows)
    if present_rows.size == 0:
        raise ImputationImpossibleError()

    result = Imputed(zeros, zeros, missing_rows)
    if alpha > 0:
        w, result.weights_M = _weights(
            take_rows(M_h, missing_rows), take_rows(M_h, present_rows), tau1, mode
        )
        result.M_tilde = matmul(w, M_y_hat).scale(alpha)
    if beta > 0:
        w, result.weights_C = _weights(
            take_rows(C_h, missing_rows), take_rows(C_h, present_rows), tau1, mode
        )
        result.C_tilde = matmul(w, C_y_hat).scale(beta)
    return result


def impute(
    M_h: Tensor,
    C_h: Tensor,
    M_y_hat: Tensor,
    C_y_hat: Tensor,
    present_mask: np.ndarray,
    cfg: ImputeConfig,
    step: int,
    total_steps: Optional[int] = None,
    mode: ImputationMode = ImputationMode.DYNAMIC,
) -> Imputed:
    """impute_rows with α, β taken from the decay schedule at step."""
    alpha, beta = decay(cfg, step, total_steps)
    return impute_rows(M_h, C_h, M_y_hat, C_y_hat, present_mask, alpha, beta, cfg.tau1, mode)


def merge_rows(present_part: Optional[Tensor], imputed_part: Tensor, present_mask: np.ndarray) -> Tensor:
    """Interleave present and imputed rows back into batch order (N×D)."""
    present = np.asarray(present_mask, dtype=bool)
    present_rows = np.flatnonzero(present)
    missing_rows = np.flatnonzero(~present)
    parts = []
    order = []
    if present_rows.size:
        if present_part is None:
            raise ShapeError("present rows expected but no features were given")
        parts.append(present_part)
        order.extend(present_rows.tolist())
    if missing_rows.size:
        parts.append(imputed_part)
        order.extend(missing_rows.tolist())
    stacked = parts[0] if len(parts) == 1 else concat(parts, axis=0)
    inverse = np.argsort(np.asarray(order, dtype=np.int64), kind="stable")
    if np.array_equal(inverse, np.arange(inverse.size)):
        return stacked
    return take_rows(stacked, inverse)
