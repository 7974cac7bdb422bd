import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import DomainError, GraphError, ShapeError

DTYPE = np.float32

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", float, int, np.ndarray]

_grad_state = threading.local()
_dtype_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether new operations record a compute graph on this thread."""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording for the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def compute_dtype() -> type:
    """Element type of tensors created on this thread."""
    return getattr(_dtype_state, "dtype", DTYPE)


@contextmanager
def double_precision() -> Iterator[None]:
    """Create new tensors as float64 on the current thread, e.g. for finite-difference checks."""
    previous = compute_dtype()
    _dtype_state.dtype = np.float64
    try:
        yield
    finally:
        _dtype_state.dtype = previous


class Tensor:
    """
    Dense array (float32 unless under double_precision) with optional reverse-mode gradient tracking.

    Leaves created by the user hold gradients; intermediate results only
    carry the closures needed to push gradients back to their parents.
    A graph is recorded only when grad mode is on and at least one parent
    requires a gradient.
    """

    def __init__(self, data: Union[np.ndarray, Sequence, float], requires_grad: bool = False):
        self.data: np.ndarray = np.array(data, dtype=compute_dtype())
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward_fn: Optional[BackwardFn] = None

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward_fn: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Create the result of an operation, recording it when needed."""
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=compute_dtype())
        out.op = op
        out._grad = None
        tracked = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        out._parents = tuple(parents) if tracked else ()
        out._backward_fn = backward_fn if tracked else None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward_fn is None

    @property
    def grad(self) -> Optional[np.ndarray]:
        if not self.requires_grad:
            return None
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    def zero_grad(self) -> None:
        if self.requires_grad:
            self._grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() needs a single-element tensor", [self.shape])
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    def backward(self, retain_graph: bool = False) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires a gradient."""
        if self.data.size != 1:
            raise ShapeError("backward needs a scalar loss", [self.shape])
        if not self.requires_grad:
            raise GraphError("backward called on a tensor outside any recorded graph")

        order = self._topological_order()
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            upstream = pending.pop(id(node), None)
            if upstream is None:
                continue
            if node._backward_fn is None:
                node.grad[...] += upstream
                continue
            for parent, contribution in zip(node._parents, node._backward_fn(upstream)):
                if contribution is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + contribution
                else:
                    pending[key] = contribution

        if not retain_graph:
            for node in order:
                if node._backward_fn is not None:
                    node._parents = ()
                    node._backward_fn = None
                    node.requires_grad = False

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    # elementwise arithmetic -------------------------------------------------

    def __add__(self, other: Operand) -> "Tensor":
        return _binary(self, other, "add")

    def __radd__(self, other: Operand) -> "Tensor":
        return _binary(as_tensor(other), self, "add")

    def __sub__(self, other: Operand) -> "Tensor":
        return _binary(self, other, "sub")

    def __rsub__(self, other: Operand) -> "Tensor":
        return _binary(as_tensor(other), self, "sub")

    def __mul__(self, other: Operand) -> "Tensor":
        return _binary(self, other, "mul")

    def __rmul__(self, other: Operand) -> "Tensor":
        return _binary(as_tensor(other), self, "mul")

    def __truediv__(self, other: Operand) -> "Tensor":
        return _binary(self, other, "div")

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return _binary(as_tensor(other), self, "div")

    def __neg__(self) -> "Tensor":
        return self.scale(-1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def scale(self, factor: float) -> "Tensor":
        factor = float(factor)
        return Tensor.from_op(
            self.data * self.data.dtype.type(factor), (self,), lambda g: (g * g.dtype.type(factor),), "scale"
        )

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        return Tensor.from_op(out_data, (self,), lambda g: (g * out_data,), "exp")

    def log(self) -> "Tensor":
        if np.any(self.data <= 0):
            raise DomainError("log of non-positive input")
        x = self.data
        return Tensor.from_op(np.log(x), (self,), lambda g: (g / x,), "log")

    def relu(self) -> "Tensor":
        mask = (self.data > 0).astype(self.data.dtype)
        return Tensor.from_op(self.data * mask, (self,), lambda g: (g * mask,), "relu")

    def square(self) -> "Tensor":
        x = self.data
        return Tensor.from_op(x * x, (self,), lambda g: (2.0 * g * x,), "square")

    # reductions and views ---------------------------------------------------

    def sum(self, axis: Union[None, int, Tuple[int, ...]] = None, keepdims: bool = False) -> "Tensor":
        shape = self.data.shape
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g: np.ndarray) -> Tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).astype(g.dtype),)

        return Tensor.from_op(out_data, (self,), backward, "sum")

    def mean(self, axis: Union[None, int, Tuple[int, ...]] = None, keepdims: bool = False) -> "Tensor":
        total = self.sum(axis=axis, keepdims=keepdims)
        count = self.data.size // max(total.data.size, 1)
        return total.scale(1.0 / count)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.data.shape
        try:
            out_data = self.data.reshape(shape)
        except ValueError as e:
            raise ShapeError(f"Cannot reshape: {e}", [original, shape]) from e
        return Tensor.from_op(out_data, (self,), lambda g: (g.reshape(original),), "reshape")

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError("transpose needs a 2-D tensor", [self.shape])
        return Tensor.from_op(self.data.T, (self,), lambda g: (g.T,), "transpose")


def as_tensor(value: Operand) -> Tensor:
    """Wrap constants; tensors pass through unchanged."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _binary(a: Tensor, b: Operand, op: str) -> Tensor:
    b = as_tensor(b)
    x, y = a.data, b.data
    if a.shape == b.shape:
        out_shape = a.shape
    elif b.size == 1:
        y = y.reshape(())
        out_shape = a.shape
    elif a.size == 1:
        x = x.reshape(())
        out_shape = b.shape
    else:
        raise ShapeError(f"Incompatible shapes for {op}", [a.shape, b.shape])

    def fit(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        if g.shape == shape:
            return g
        return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)

    if op == "add":
        out = x + y

        def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            return fit(g, a.shape), fit(g, b.shape)

    elif op == "sub":
        out = x - y

        def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            return fit(g, a.shape), fit(-g, b.shape)

    elif op == "mul":
        out = x * y

        def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            return fit(g * y, a.shape), fit(g * x, b.shape)

    elif op == "div":
        if np.any(y == 0):
            raise DomainError("division by zero")
        out = x / y

        def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            return fit(g / y, a.shape), fit(-g * x / (y * y), b.shape)

    else:
        raise ValueError(f"Unknown binary op '{op}'")

    return Tensor.from_op(out.reshape(out_shape), (a, b), backward, op)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m×k and a k×n tensor."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul inner dimensions disagree", [a.shape, b.shape])
    x, y = a.data, b.data
    return Tensor.from_op(x @ y, (a, b), lambda g: (g @ y.T, x.T @ g), "matmul")
