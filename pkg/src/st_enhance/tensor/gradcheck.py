from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, double_precision


def numeric_gradient(fn: Callable[[], Tensor], leaf: Tensor, step: float = 1e-3) -> np.ndarray:
    """Central finite differences of a scalar fn() with respect to leaf.data."""
    grad = np.zeros(leaf.data.shape, dtype=np.float64)
    flat = leaf.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = float(flat[i])
        plus = float(fn().data.sum(dtype=np.float64))
        flat[i] = original - step
        lower = float(flat[i])
        minus = float(fn().data.sum(dtype=np.float64))
        flat[i] = original
        # a float32 leaf rounds the step, so divide by what was realised
        out[i] = (plus - minus) / (upper - lower)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-2) -> float:
    """max |a − n| / max(|a|, |n|, floor) over all entries."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = 1e-3) -> float:
    """
    Compare backward() of fn against finite differences for every input.

    fn must rebuild its graph on every call and return a scalar tensor.
    Both gradients are taken with the inputs promoted to float64, so the
    comparison measures the backward formulas rather than float32 rounding;
    the inputs get their original arrays back afterwards.
    Returns the worst relative error across all inputs.
    """
    originals = [leaf.data for leaf in inputs]
    try:
        with double_precision():
            for leaf in inputs:
                leaf.data = leaf.data.astype(np.float64)
                leaf.zero_grad()
            fn().backward()
            analytic = [leaf.grad.copy() for leaf in inputs]
            worst = 0.0
            for leaf, a in zip(inputs, analytic):
                worst = max(worst, relative_error(a, numeric_gradient(fn, leaf, step)))
    finally:
        for leaf, data in zip(inputs, originals):
            leaf.data = data
            leaf.zero_grad()
    return worst
