"""Compiled convolution kernels (numba), used by Conv2d when available.

Summation order is fixed in code (including the 4-way partial sums in the
weight-gradient kernel), so results are bit-deterministic across runs and
platforms. The pure-numpy im2col path in layers.py computes the same
quantities and remains the fallback.
"""

import os

import numpy as np

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
from numba import njit, prange


@njit(cache=True, parallel=True)
def conv_fwd(xp, W, bias, stride, out):
    B = xp.shape[0]
    C = xp.shape[1]
    O, _, K, _ = W.shape
    Ho = out.shape[2]
    Wo = out.shape[3]
    for n in prange(B):
        for oc in range(O):
            for i in range(Ho):
                row = out[n, oc, i]
                for j in range(Wo):
                    row[j] = bias[oc]
                for ic in range(C):
                    for ki in range(K):
                        xrow = xp[n, ic, i * stride + ki]
                        for kj in range(K):
                            w = W[oc, ic, ki, kj]
                            if stride == 1:
                                for j in range(Wo):
                                    row[j] += w * xrow[j + kj]
                            else:
                                for j in range(Wo):
                                    row[j] += w * xrow[j * stride + kj]


@njit(cache=True, parallel=True)
def conv_bwd_dw(xp, gout, stride, dW):
    B = xp.shape[0]
    C = xp.shape[1]
    O, _, K, _ = dW.shape
    Ho = gout.shape[2]
    Wo = gout.shape[3]
    for oc in prange(O):
        for n in range(B):
            for ic in range(C):
                for ki in range(K):
                    for kj in range(K):
                        a0 = 0.0
                        a1 = 0.0
                        a2 = 0.0
                        a3 = 0.0
                        for i in range(Ho):
                            grow = gout[n, oc, i]
                            xrow = xp[n, ic, i * stride + ki]
                            if stride == 1:
                                j = 0
                                while j + 4 <= Wo:
                                    a0 += grow[j] * xrow[j + kj]
                                    a1 += grow[j + 1] * xrow[j + 1 + kj]
                                    a2 += grow[j + 2] * xrow[j + 2 + kj]
                                    a3 += grow[j + 3] * xrow[j + 3 + kj]
                                    j += 4
                                while j < Wo:
                                    a0 += grow[j] * xrow[j + kj]
                                    j += 1
                            else:
                                for j in range(Wo):
                                    a0 += grow[j] * xrow[j * stride + kj]
                        dW[oc, ic, ki, kj] += (a0 + a1) + (a2 + a3)


@njit(cache=True, parallel=True)
def conv_bwd_dx(W, gout, stride, dxp):
    B = dxp.shape[0]
    C = dxp.shape[1]
    O, _, K, _ = W.shape
    Ho = gout.shape[2]
    Wo = gout.shape[3]
    for n in prange(B):
        for oc in range(O):
            for ic in range(C):
                for ki in range(K):
                    for kj in range(K):
                        w = W[oc, ic, ki, kj]
                        for i in range(Ho):
                            grow = gout[n, oc, i]
                            xrow = dxp[n, ic, i * stride + ki]
                            if stride == 1:
                                for j in range(Wo):
                                    xrow[j + kj] += w * grow[j]
                            else:
                                for j in range(Wo):
                                    xrow[j * stride + kj] += w * grow[j]
