"""Named trainable parameters and the Adam optimizer."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Parameter:
    """A named leaf tensor with Adam moment buffers."""

    __slots__ = ("name", "tensor", "adam_m", "adam_v", "step_count")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.adam_m = np.zeros_like(self.tensor.data)
        self.adam_v = np.zeros_like(self.tensor.data)
        self.step_count = 0

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray:
        return self.tensor.grad

    def zero_grad(self):
        self.tensor.zero_grad()

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.data.shape})"


class Adam:
    """Bias-corrected Adam over a list of Parameters; deterministic."""

    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        for p in self.params:
            p.step_count += 1
            t = p.step_count
            g = p.grad
            p.adam_m *= self.beta1
            p.adam_m += (1.0 - self.beta1) * g
            p.adam_v *= self.beta2
            p.adam_v += (1.0 - self.beta2) * g * g
            m_hat = p.adam_m / (1.0 - self.beta1 ** t)
            v_hat = p.adam_v / (1.0 - self.beta2 ** t)
            p.tensor.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
