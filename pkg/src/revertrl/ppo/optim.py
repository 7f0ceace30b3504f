from __future__ import annotations

import math

import numpy as np

from .network import NetworkParams


class Adam:
    """Adam over every array of a :class:`NetworkParams`, with global-norm clipping."""

    def __init__(
        self,
        params: NetworkParams,
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        max_grad_norm: float | None = 0.5,
    ):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, params: NetworkParams) -> float:
        """Apply one update from ``params.grads``; returns the pre-clip gradient norm."""
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in params.grads.values()))
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, w in params.arrays.items():
            g = params.grads[k] * scale
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            w -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
        return norm
