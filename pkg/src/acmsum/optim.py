"""Adam optimizer over named parameter collections."""

from __future__ import annotations

import numpy as np

from . import kernels
from .autodiff import NumericError, Tensor


class Adam:
    """Adam with fixed hyperparameters; update math runs in a fused kernel."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        for p in self.params:
            # fused update mutates a flat view; requires contiguous storage
            if not p.data.flags.c_contiguous:
                p.data = np.ascontiguousarray(p.data)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros(p.data.size) for p in self.params]
        self._v = [np.zeros(p.data.size) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad.reshape(-1)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {p.name or '<param>'}")
            flat = p.data.reshape(-1)
            kernels.adam_step(flat, g, m, v, self.lr, self.beta1, self.beta2, self.eps, bias1, bias2)
            if not np.all(np.isfinite(flat)):
                raise NumericError(f"non-finite parameter after update: {p.name or '<param>'}")
