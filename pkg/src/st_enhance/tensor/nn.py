from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from .ops import conv2d_3x3, expand, take_rows
from .tensor import DTYPE, Tensor, matmul


def parameter(array: np.ndarray) -> Tensor:
    return Tensor(array.astype(DTYPE), requires_grad=True)


class Module:
    """
    Container that discovers parameters and sub-modules from its attributes.

    Attribute insertion order defines parameter order, so two modules built
    with the same seed expose identical named_parameters() sequences.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"State is missing parameters: {', '.join(missing)}")
        for name, p in own.items():
            if state[name].shape != p.data.shape:
                raise ValueError(f"Shape mismatch for {name}: {state[name].shape} vs {p.data.shape}")
            p.data[...] = state[name]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


class Linear(Module):
    """Affine map x·W + b for N×in inputs."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        bound = np.sqrt(1.0 / in_features)
        self.weight = parameter(rng.uniform(-bound, bound, (in_features, out_features)))
        self.bias = parameter(np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        return out + expand(self.bias, out.shape)


class Conv2d(Module):
    """3×3 same-padding convolution with He-uniform initialisation."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        bound = np.sqrt(6.0 / (in_channels * 9))
        self.weight = parameter(rng.uniform(-bound, bound, (out_channels, in_channels, 3, 3)))
        self.bias = parameter(np.zeros(out_channels))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_3x3(x, self.weight, self.bias)


class Embedding(Module):
    """Learned lookup table indexed by integer codes."""

    def __init__(self, num_codes: int, dim: int, rng: np.random.Generator):
        self.table = parameter(rng.normal(0.0, 0.1, (num_codes, dim)))

    def __call__(self, codes: Sequence[int]) -> Tensor:
        return take_rows(self.table, codes)
