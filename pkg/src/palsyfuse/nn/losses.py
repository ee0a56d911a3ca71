"""Binary cross-entropy, the training objective throughout."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError

CLAMP = 1e-7


def bce_loss(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE over the batch and its gradient with respect to p.

    p is clamped to [1e-7, 1-1e-7] before the logs; the gradient is
    (p - y) / (p (1 - p)) / N evaluated at the clamped probabilities.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionError(f"bce: probability shape {p.shape} != label shape {y.shape}")
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    n = p.size
    loss = float(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum() / n)
    grad = (pc - y) / (pc * (1.0 - pc)) / n
    return loss, grad
