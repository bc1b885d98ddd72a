"""AdamW optimizer with decoupled weight decay.

Moments are kept per parameter in float64 regardless of parameter
dtype. Weight decay multiplies the parameter directly by
(1 - lr * wd) before the adaptive update, so decay strength does not
depend on the gradient moments.
"""

from __future__ import annotations

from typing import Dict, Iterable, List

import numpy as np

from .errors import DivergenceError
from .tensor import Tensor


class AdamW:
    def __init__(self, params: Iterable[Tensor], lr: float,
                 betas: tuple = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= betas[0] < 1.0 or not 0.0 <= betas[1] < 1.0:
            raise ValueError(f"betas must lie in [0, 1), got {betas}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        if weight_decay < 0.0:
            raise ValueError(f"weight decay must be non-negative, got {weight_decay}")
        self.params: List[Tensor] = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: Dict[int, np.ndarray] = {}
        self._v: Dict[int, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            if p.grad is None:
                continue
            g = np.asarray(p.grad, dtype=np.float64)
            if not np.all(np.isfinite(g)):
                raise DivergenceError("non-finite gradient in optimizer step")
            key = id(p)
            m = self._m.get(key)
            v = self._v.get(key)
            if m is None:
                m = np.zeros(p.data.shape, dtype=np.float64)
                v = np.zeros(p.data.shape, dtype=np.float64)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self._m[key] = m
            self._v[key] = v
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            new = p.data.astype(np.float64) * (1.0 - self.lr * self.weight_decay)
            new -= self.lr * update
            p.data = new.astype(p.data.dtype)

    def state_summary(self) -> dict:
        """Small diagnostic view: step count and moment norms."""
        return {
            "step": self.t,
            "m_norm": float(sum(np.linalg.norm(m) for m in self._m.values())),
            "v_norm": float(sum(np.linalg.norm(v) for v in self._v.values())),
        }
