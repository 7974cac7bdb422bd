from typing import Dict, List, Sequence, Tuple

import numpy as np

from .tensor import DTYPE, Tensor


class Adam:
    """Adam over a fixed, named parameter list."""

    def __init__(
        self,
        named_parameters: Sequence[Tuple[str, Tensor]],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.names: List[str] = [name for name, _ in named_parameters]
        self.params: List[Tensor] = [p for _, p in named_parameters]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = (self.beta1 * self.m[i] + (1 - self.beta1) * g).astype(DTYPE)
            self.v[i] = (self.beta2 * self.v[i] + (1 - self.beta2) * g * g).astype(DTYPE)
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(DTYPE)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        state: Dict[str, np.ndarray] = {}
        for name, m, v in zip(self.names, self.m, self.v):
            state[f"adam.m/{name}"] = m.copy()
            state[f"adam.v/{name}"] = v.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], t: int) -> None:
        for i, name in enumerate(self.names):
            self.m[i] = state[f"adam.m/{name}"].astype(DTYPE).copy()
            self.v[i] = state[f"adam.v/{name}"].astype(DTYPE).copy()
        self.t = t
