"""Optimizers: plain SGD and AdamW with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .layers import Param


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list[Param]) -> None:
        for p in params:
            if p.grad.shape != p.value.shape:
                raise DimensionError(
                    f"sgd: gradient shape {p.grad.shape} != parameter shape {p.value.shape}")
            p.value -= self.lr * p.grad


class AdamW:
    """Standard decoupled-weight-decay update with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def step(self, params: list[Param]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in params:
            if p.grad.shape != p.value.shape:
                raise DimensionError(
                    f"adamw: gradient shape {p.grad.shape} != parameter shape {p.value.shape}")
            key = id(p)
            m = self._m.get(key)
            if m is None:
                m = self._m[key] = np.zeros_like(p.value)
                self._v[key] = np.zeros_like(p.value)
            v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            mhat = m / bc1
            vhat = v / bc2
            p.value -= self.lr * (mhat / (np.sqrt(vhat) + self.eps)
                                  + self.weight_decay * p.value)


def make_optimizer(name: str, lr: float, weight_decay: float = 0.0):
    if name == "sgd":
        return SGD(lr)
    if name == "adamw":
        return AdamW(lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r}")
