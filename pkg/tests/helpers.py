"""Shared test oracles: finite-difference gradient checking and fixtures.

The gradient oracle only ever calls forward passes, so it stays independent
of every analytic backward implementation it checks.
"""

from __future__ import annotations

import numpy as np

from palsyfuse.nn import bce_loss, named_params, reseed_dropout, zero_grads

FD_EPS = 1e-5
REL_TOL = 1e-4


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def grad_check(net, x, y, *, max_entries_per_param: int = 12, seed: int = 0,
               fixed_dropout_seed: int | None = 1234) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout streams are re-seeded before every forward so each loss
    evaluation sees identical masks.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def loss_only() -> float:
        if fixed_dropout_seed is not None:
            reseed_dropout(net, fixed_dropout_seed)
        out = net.forward(x, train=True)
        loss, _ = bce_loss(out.reshape(-1), y)
        return loss

    def loss_and_backward() -> None:
        if fixed_dropout_seed is not None:
            reseed_dropout(net, fixed_dropout_seed)
        out = net.forward(x, train=True)
        _, grad = bce_loss(out.reshape(-1), y)
        net.backward(grad.reshape(out.shape))

    zero_grads(net)
    loss_and_backward()

    picker = np.random.default_rng(seed)
    worst = 0.0
    for _, p in named_params(net):
        flat = p.value.reshape(-1)
        gflat = p.grad.reshape(-1)
        n = flat.size
        idx = (np.arange(n) if n <= max_entries_per_param
               else picker.choice(n, size=max_entries_per_param, replace=False))
        for i in idx:
            old = flat[i]
            flat[i] = old + FD_EPS
            lp = loss_only()
            flat[i] = old - FD_EPS
            lm = loss_only()
            flat[i] = old
            fd = (lp - lm) / (2.0 * FD_EPS)
            worst = max(worst, _rel_err(fd, gflat[i]))
    return worst


def input_grad_check(layer, x, *, seed: int = 0, max_entries: int = 24) -> float:
    """Check d(sum of outputs)/d(input) for a single layer via the same oracle."""
    x = np.array(x, dtype=np.float64)

    def loss_only() -> float:
        return float(layer.forward(x, train=True).sum())

    out = layer.forward(x, train=True)
    gin = layer.backward(np.ones_like(out))

    picker = np.random.default_rng(seed)
    flat = x.reshape(-1)
    gflat = gin.reshape(-1)
    n = flat.size
    idx = (np.arange(n) if n <= max_entries
           else picker.choice(n, size=max_entries, replace=False))
    worst = 0.0
    for i in idx:
        old = flat[i]
        flat[i] = old + FD_EPS
        lp = loss_only()
        flat[i] = old - FD_EPS
        lm = loss_only()
        flat[i] = old
        fd = (lp - lm) / (2.0 * FD_EPS)
        worst = max(worst, _rel_err(fd, gflat[i]))
    return worst
