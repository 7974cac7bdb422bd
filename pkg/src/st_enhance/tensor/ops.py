from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core.errors import DegenerateInputError, DomainError, ShapeError
from .tensor import Operand, Tensor, as_tensor, matmul

__all__ = [
    "elementwise",
    "matmul",
    "softmax_rows",
    "logsumexp_rows",
    "normalize_rows",
    "concat",
    "take_rows",
    "expand",
    "conv2d_3x3",
    "avg_pool2d",
    "upsample_nearest",
    "mse",
]

_UNARY = {"exp", "log", "relu"}
_BINARY = {"add": "__add__", "sub": "__sub__", "mul": "__mul__", "div": "__truediv__"}


def elementwise(op: str, a: Operand, b: Optional[Operand] = None, *, factor: float = 1.0) -> Tensor:
    """Dispatch one of add, sub, mul, div, exp, log, relu, scale by name."""
    a = as_tensor(a)
    if op in _UNARY:
        return getattr(a, op)()
    if op == "scale":
        return a.scale(factor)
    if op in _BINARY:
        if b is None:
            raise ValueError(f"'{op}' needs two operands")
        return getattr(a, _BINARY[op])(b)
    raise ValueError(f"Unknown elementwise op '{op}'")


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{what} received non-finite input")


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of an n×k tensor, computed with max subtraction."""
    if x.ndim != 2:
        raise ShapeError("softmax_rows needs a 2-D tensor", [x.shape])
    _check_finite(x.data, "softmax_rows")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return Tensor.from_op(y, (x,), backward, "softmax_rows")


def logsumexp_rows(x: Tensor) -> Tensor:
    """log Σ_j exp(x_ij) per row; returns a length-n tensor."""
    if x.ndim != 2:
        raise ShapeError("logsumexp_rows needs a 2-D tensor", [x.shape])
    _check_finite(x.data, "logsumexp_rows")
    peak = x.data.max(axis=1, keepdims=True)
    e = np.exp(x.data - peak)
    total = e.sum(axis=1, keepdims=True)
    out = (np.log(total) + peak)[:, 0]
    weights = e / total

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g[:, None] * weights,)

    return Tensor.from_op(out, (x,), backward, "logsumexp_rows")


def normalize_rows(x: Tensor) -> Tensor:
    """Project every row onto the unit sphere: v / ‖v‖₂."""
    if x.ndim != 2:
        raise ShapeError("normalize_rows needs a 2-D tensor", [x.shape])
    norms = np.sqrt((x.data.astype(np.float64) ** 2).sum(axis=1, keepdims=True))
    if np.any(norms == 0):
        raise DegenerateInputError("cannot project a zero vector onto the unit sphere")
    norms = norms.astype(x.data.dtype)
    y = x.data / norms

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)

    return Tensor.from_op(y, (x,), backward, "normalize_rows")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along an existing axis."""
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat failed: {e}", [t.shape for t in tensors]) from e
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def backward(g: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(g, bounds, axis=axis)

    return Tensor.from_op(out, tuple(tensors), backward, "concat")


def take_rows(x: Tensor, index: Sequence[int]) -> Tensor:
    """Gather rows (first axis) by index; repeated indices accumulate gradient."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < -x.shape[0] or idx.max() >= x.shape[0]):
        raise ShapeError(f"row index out of range for {x.shape[0]} rows", [x.shape])
    shape = x.data.shape

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor.from_op(x.data[idx], (x,), backward, "take_rows")


def expand(x: Tensor, shape: Sequence[int]) -> Tensor:
    """
    Broadcast x to shape following numpy rules (size-1 or missing leading
    axes are repeated). The backward pass sums over the repeated axes.
    """
    shape = tuple(int(s) for s in shape)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError as e:
        raise ShapeError("cannot expand", [x.shape, shape]) from e
    source = x.data.shape
    lead = len(shape) - len(source)
    repeated = tuple(
        i for i, extent in enumerate(shape) if i < lead or source[i - lead] == 1 and extent != 1
    )

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        reduced = g.sum(axis=repeated, keepdims=True) if repeated else g
        return (reduced.reshape(source),)

    return Tensor.from_op(np.ascontiguousarray(out), (x,), backward, "expand")


def conv2d_3x3(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Stride-1, same-padding 3×3 convolution.

    x is N×C×H×W, weight is O×C×3×3, bias is length O.
    """
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ShapeError("conv2d_3x3 needs N×C×H×W input and O×C×3×3 weight", [x.shape, weight.shape])
    if x.shape[1] != weight.shape[1]:
        raise ShapeError("conv2d_3x3 channel mismatch", [x.shape, weight.shape])
    w = weight.data
    padded = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    out = np.einsum("nchwij,ocij->nohw", windows, w, optimize=True)
    if bias is not None:
        if bias.shape != (w.shape[0],):
            raise ShapeError("conv2d_3x3 bias length mismatch", [bias.shape, w.shape])
        out = out + bias.data[None, :, None, None]
    flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1])

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad_w = np.einsum("nchwij,nohw->ocij", windows, g, optimize=True)
        g_windows = sliding_window_view(
            np.pad(g, ((0, 0), (0, 0), (1, 1), (1, 1))), (3, 3), axis=(2, 3)
        )
        grad_x = np.einsum("nohwij,ocij->nchw", g_windows, flipped, optimize=True)
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "conv2d_3x3")


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k×k mean pooling of an N×C×H×W tensor."""
    n, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"avg_pool2d factor {k} does not divide spatial extent", [x.shape])
    out = x.data.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        spread = np.repeat(np.repeat(g, k, axis=2), k, axis=3)
        return (spread / spread.dtype.type(k * k),)

    return Tensor.from_op(out, (x,), backward, "avg_pool2d")


def upsample_nearest(x: Tensor, k: int) -> Tensor:
    """Repeat every pixel of an N×C×H×W tensor into a k×k block."""
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, k, axis=2), k, axis=3)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g.reshape(n, c, h, k, w, k).sum(axis=(3, 5)),)

    return Tensor.from_op(out, (x,), backward, "upsample_nearest")


def mse(prediction: Tensor, target: Tensor) -> Tensor:
    """Mean squared error averaged over every element."""
    if prediction.shape != target.shape:
        raise ShapeError("mse shape mismatch", [prediction.shape, target.shape])
    return (prediction - target).square().mean()
