"""Layers with hand-written forward/backward passes, 64-bit throughout.

Every layer caches what its backward pass needs during a train-mode forward;
calling backward without that cache raises StateError. Composite layers
(TokenMix, ChannelMix, Residual, Sequential) expose their children so
parameter traversal, serialization, and gradient checks see one flat,
stable, named ordering.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, ndtr

from ..errors import DimensionError, StateError

try:
    from . import _convkernels
except ImportError:  # numba unavailable: Conv2d falls back to im2col
    _convkernels = None

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Param:
    """A learnable array plus its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    kind = "layer"

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self):
        """[(local_name, Param)] owned directly by this layer."""
        return []

    def buffers(self):
        """[(local_name, ndarray)] of non-learnable state (running stats)."""
        return []

    def children(self):
        """[(name, Layer)] for composites."""
        return []

    def _need_cache(self, cache):
        if cache is None:
            raise StateError(f"{self.kind}: backward called without a train-mode forward")
        return cache


def named_params(layer: Layer, prefix: str = ""):
    out = []
    for name, p in layer.params():
        out.append((prefix + name, p))
    for child_name, child in layer.children():
        out.extend(named_params(child, f"{prefix}{child_name}."))
    return out


def named_state(layer: Layer, prefix: str = ""):
    """Params then buffers, depth-first; the serialization order."""
    out = []
    for name, p in layer.params():
        out.append((prefix + name, p.value))
    for name, b in layer.buffers():
        out.append((prefix + name, b))
    for child_name, child in layer.children():
        out.extend(named_state(child, f"{prefix}{child_name}."))
    return out


def zero_grads(layer: Layer) -> None:
    for _, p in named_params(layer):
        p.grad[...] = 0.0


def reseed_dropout(layer: Layer, seed: int) -> None:
    """Reset every dropout stream (keeps finite-difference checks coherent)."""
    if isinstance(layer, Dropout):
        layer.reseed(seed)
    for i, (_, child) in enumerate(layer.children()):
        reseed_dropout(child, seed + 1009 * (i + 1))


def collect_batchnorms(layer: Layer) -> list["BatchNorm1d"]:
    out = []
    if isinstance(layer, BatchNorm1d):
        out.append(layer)
    for _, child in layer.children():
        out.extend(collect_batchnorms(child))
    return out


def recalibrate_batchnorm(net: Layer, X: np.ndarray, batch_size: int) -> None:
    """Re-estimate BatchNorm running statistics under the final weights.

    Runs eval-path forwards (dropout off) with BatchNorm temporarily
    normalizing by batch statistics and accumulating their cumulative
    average. Without this, statistics tracked with momentum during training
    lag the weight trajectory, which skews eval-mode outputs whenever the
    layers below the norm were themselves training.
    """
    bns = collect_batchnorms(net)
    if not bns:
        return
    for bn in bns:
        bn.running_mean[...] = 0.0
        bn.running_var[...] = 0.0
        bn._calib_n = 0
    try:
        for start in range(0, X.shape[0], batch_size):
            xb = X[start:start + batch_size]
            if xb.shape[0] < 2 and X.shape[0] > xb.shape[0]:
                continue  # a 1-sample tail contributes a degenerate variance
            net.forward(xb, train=False)
    finally:
        for bn in bns:
            bn._calib_n = None


class Linear(Layer):
    """y = x @ W + b on the last axis; accepts any leading shape."""

    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 init: str = "kaiming"):
        self.in_features = in_features
        self.out_features = out_features
        if init == "kaiming":
            w = kaiming_uniform(rng, (in_features, out_features), in_features)
        elif init == "xavier":
            w = xavier_uniform(rng, (in_features, out_features), in_features, out_features)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.W = Param(w)
        self.b = Param(np.zeros(out_features))
        self._cache = None

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def forward(self, x, train=False):
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"linear: expected last dim {self.in_features}, got {x.shape[-1]}")
        # one large 2-D matmul beats numpy's batched 3-D path
        x2 = np.ascontiguousarray(x).reshape(-1, self.in_features)
        self._cache = (x2, x.shape) if train else None
        out = x2 @ self.W.value + self.b.value
        return out.reshape(x.shape[:-1] + (self.out_features,))

    def backward(self, gout):
        x2, x_shape = self._need_cache(self._cache)
        g2 = np.ascontiguousarray(gout).reshape(-1, self.out_features)
        self.W.grad += x2.T @ g2
        self.b.grad += g2.sum(axis=0)
        return (g2 @ self.W.value.T).reshape(x_shape)


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        mask = x > 0.0
        self._cache = mask if train else None
        return x * mask

    def backward(self, gout):
        mask = self._need_cache(self._cache)
        return gout * mask


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, alpha: float = 0.01):
        self.alpha = alpha
        self._cache = None

    def forward(self, x, train=False):
        mask = x > 0.0
        self._cache = mask if train else None
        return np.where(mask, x, self.alpha * x)

    def backward(self, gout):
        mask = self._need_cache(self._cache)
        return gout * np.where(mask, 1.0, self.alpha)


class GELU(Layer):
    """Exact Gaussian-CDF form: y = x * Phi(x)."""

    kind = "gelu"

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        phi = ndtr(x)
        self._cache = (x, phi) if train else None
        return x * phi

    def backward(self, gout):
        x, phi = self._need_cache(self._cache)
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return gout * (phi + x * pdf)


class Sigmoid(Layer):
    kind = "sigmoid"

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        y = expit(x)
        self._cache = y if train else None
        return y

    def backward(self, gout):
        y = self._need_cache(self._cache)
        return gout * y * (1.0 - y)


class Dropout(Layer):
    """Inverted dropout: scales survivors by 1/(1-p); eval mode is identity."""

    kind = "dropout"

    def __init__(self, p: float, seed: int = 0):
        if not (0.0 <= p < 1.0):
            raise ValueError(f"dropout probability must be in [0,1), got {p}")
        self.p = p
        self._seed = seed
        self.rng = np.random.default_rng(seed)
        self._cache = None

    def reseed(self, seed: int) -> None:
        self._seed = seed
        self.rng = np.random.default_rng(seed)

    def forward(self, x, train=False):
        if not train or self.p == 0.0:
            self._cache = np.ones_like(x) if train else None
            return x
        keep = self.rng.random(x.shape) >= self.p
        scale = keep / (1.0 - self.p)
        self._cache = scale
        return x * scale

    def backward(self, gout):
        scale = self._need_cache(self._cache)
        return gout * scale


class BatchNorm1d(Layer):
    """Per-feature normalization over the batch axis of a 2-D input."""

    kind = "batchnorm1d"

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1):
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(np.ones(num_features))
        self.beta = Param(np.zeros(num_features))
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self._cache = None
        self._calib_n = None  # batch counter while re-estimating running stats

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise DimensionError(
                f"batchnorm1d: expected (batch, {self.num_features}), got {x.shape}")
        if train or self._calib_n is not None:
            mean = x.mean(axis=0)
            var = x.var(axis=0)  # biased
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv
            if self._calib_n is not None:
                # cumulative average toward the final-weight activation stats
                self._calib_n += 1
                self.running_mean += (mean - self.running_mean) / self._calib_n
                self.running_var += (var - self.running_var) / self._calib_n
                self._cache = None
            else:
                self.running_mean += self.momentum * (mean - self.running_mean)
                self.running_var += self.momentum * (var - self.running_var)
                self._cache = (xhat, inv)
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * inv
            self._cache = None
        return xhat * self.gamma.value + self.beta.value

    def backward(self, gout):
        xhat, inv = self._need_cache(self._cache)
        self.gamma.grad += (gout * xhat).sum(axis=0)
        self.beta.grad += gout.sum(axis=0)
        gxhat = gout * self.gamma.value
        return inv * (gxhat - gxhat.mean(axis=0) - xhat * (gxhat * xhat).mean(axis=0))


class LayerNorm(Layer):
    """Normalization over the last axis, per sample."""

    kind = "layernorm"

    def __init__(self, dim: int, eps: float = 1e-6):
        self.dim = dim
        self.eps = eps
        self.gamma = Param(np.ones(dim))
        self.beta = Param(np.zeros(dim))
        self._cache = None

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def forward(self, x, train=False):
        if x.shape[-1] != self.dim:
            raise DimensionError(f"layernorm: expected last dim {self.dim}, got {x.shape[-1]}")
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv) if train else None
        return xhat * self.gamma.value + self.beta.value

    def backward(self, gout):
        xhat, inv = self._need_cache(self._cache)
        axes = tuple(range(gout.ndim - 1))
        self.gamma.grad += (gout * xhat).sum(axis=axes)
        self.beta.grad += gout.sum(axis=axes)
        gxhat = gout * self.gamma.value
        return inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                      - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))


def extract_patches(x: np.ndarray, patch: int) -> np.ndarray:
    """(B,C,H,W) -> (B, S, C*patch*patch), row-major patch grid."""
    b, c, h, w = x.shape
    hp, wp = h // patch, w // patch
    y = x.reshape(b, c, hp, patch, wp, patch)
    y = y.transpose(0, 2, 4, 1, 3, 5)
    return np.ascontiguousarray(y).reshape(b, hp * wp, c * patch * patch)


def fold_patches(p: np.ndarray, channels: int, height: int, width: int,
                 patch: int) -> np.ndarray:
    """Inverse of extract_patches."""
    b = p.shape[0]
    hp, wp = height // patch, width // patch
    y = p.reshape(b, hp, wp, channels, patch, patch)
    y = y.transpose(0, 3, 1, 4, 2, 5)
    return np.ascontiguousarray(y).reshape(b, channels, height, width)


class PatchEmbed(Layer):
    """Non-overlapping patches through one shared linear projection."""

    kind = "patch_embed"

    def __init__(self, image_size: int, patch: int, in_channels: int, dim: int,
                 rng: np.random.Generator):
        if image_size % patch != 0:
            raise DimensionError(
                f"patch_embed: image size {image_size} not divisible by patch {patch}")
        self.image_size = image_size
        self.patch = patch
        self.in_channels = in_channels
        self.dim = dim
        self.patch_dim = in_channels * patch * patch
        self.n_tokens = (image_size // patch) ** 2
        self.W = Param(xavier_uniform(rng, (self.patch_dim, dim), self.patch_dim, dim))
        self.b = Param(np.zeros(dim))
        self._cache = None

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1:] != (self.in_channels, self.image_size, self.image_size):
            raise DimensionError(
                f"patch_embed: expected (batch, {self.in_channels}, "
                f"{self.image_size}, {self.image_size}), got {x.shape}")
        patches = extract_patches(x, self.patch)
        self._cache = patches if train else None
        return patches @ self.W.value + self.b.value

    def backward(self, gout):
        patches = self._need_cache(self._cache)
        p2 = patches.reshape(-1, self.patch_dim)
        g2 = gout.reshape(-1, self.dim)
        self.W.grad += p2.T @ g2
        self.b.grad += g2.sum(axis=0)
        dpatches = (g2 @ self.W.value.T).reshape(patches.shape)
        return fold_patches(dpatches, self.in_channels, self.image_size,
                            self.image_size, self.patch)


class TokenMix(Layer):
    """MLP across the token axis of a (batch, tokens, channels) input."""

    kind = "token_mix"

    def __init__(self, n_tokens: int, hidden: int, rng: np.random.Generator):
        self.n_tokens = n_tokens
        self.lin1 = Linear(n_tokens, hidden, rng, init="xavier")
        self.act = GELU()
        self.lin2 = Linear(hidden, n_tokens, rng, init="xavier")

    def children(self):
        return [("lin1", self.lin1), ("act", self.act), ("lin2", self.lin2)]

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[1] != self.n_tokens:
            raise DimensionError(
                f"token_mix: expected (batch, {self.n_tokens}, channels), got {x.shape}")
        xt = np.ascontiguousarray(x.transpose(0, 2, 1))
        y = self.lin2.forward(self.act.forward(self.lin1.forward(xt, train), train), train)
        return np.ascontiguousarray(y.transpose(0, 2, 1))

    def backward(self, gout):
        gt = np.ascontiguousarray(gout.transpose(0, 2, 1))
        g = self.lin1.backward(self.act.backward(self.lin2.backward(gt)))
        return np.ascontiguousarray(g.transpose(0, 2, 1))


class ChannelMix(Layer):
    """MLP across the channel axis of a (batch, tokens, channels) input."""

    kind = "channel_mix"

    def __init__(self, channels: int, hidden: int, rng: np.random.Generator):
        self.channels = channels
        self.lin1 = Linear(channels, hidden, rng, init="xavier")
        self.act = GELU()
        self.lin2 = Linear(hidden, channels, rng, init="xavier")

    def children(self):
        return [("lin1", self.lin1), ("act", self.act), ("lin2", self.lin2)]

    def forward(self, x, train=False):
        return self.lin2.forward(self.act.forward(self.lin1.forward(x, train), train), train)

    def backward(self, gout):
        return self.lin1.backward(self.act.backward(self.lin2.backward(gout)))


class Conv2d(Layer):
    """3x3-style convolution, NCHW, zero padding, arbitrary stride."""

    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 1,
                 init: str = "kaiming"):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        shape = (out_channels, in_channels, kernel, kernel)
        if init == "kaiming":
            w = kaiming_uniform(rng, shape, in_channels * kernel * kernel)
        elif init == "zero":
            w = np.zeros(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.W = Param(w)
        self.b = Param(np.zeros(out_channels))
        self.compiled = _convkernels is not None
        self._cache = None

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def _out_hw(self, h, w):
        k, s, p = self.kernel, self.stride, self.padding
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def _im2col(self, xp: np.ndarray, ho: int, wo: int) -> np.ndarray:
        """(B,C,Hp,Wp) padded input -> (B*ho*wo, C*k*k) patch matrix."""
        k, s = self.kernel, self.stride
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s]  # (B, C, ho, wo, k, k)
        cols = win.transpose(0, 2, 3, 1, 4, 5)
        return np.ascontiguousarray(cols).reshape(-1, self.in_channels * k * k)

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise DimensionError(
                f"conv2d: expected (batch, {self.in_channels}, H, W), got {x.shape}")
        b, _, h, w = x.shape
        ho, wo = self._out_hw(h, w)
        if ho <= 0 or wo <= 0:
            raise DimensionError(f"conv2d: input {h}x{w} too small for kernel {self.kernel}")
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else np.ascontiguousarray(x)
        if self.compiled:
            out = np.empty((b, self.out_channels, ho, wo))
            _convkernels.conv_fwd(xp, self.W.value, self.b.value, self.stride, out)
        else:
            cols = self._im2col(xp, ho, wo)
            wmat = self.W.value.reshape(self.out_channels, -1)
            out = cols @ wmat.T + self.b.value
            out = np.ascontiguousarray(
                out.reshape(b, ho, wo, self.out_channels).transpose(0, 3, 1, 2))
        # cache the padded input, not the 9x-larger column matrix
        self._cache = (xp, x.shape) if train else None
        return out

    def backward(self, gout):
        xp, x_shape = self._need_cache(self._cache)
        b, _, h, w = x_shape
        ho, wo = gout.shape[2], gout.shape[3]
        s, p, k = self.stride, self.padding, self.kernel
        if self.compiled:
            gout = np.ascontiguousarray(gout)
            _convkernels.conv_bwd_dw(xp, gout, s, self.W.grad)
            self.b.grad += gout.sum(axis=(0, 2, 3))
            dxp = np.zeros(xp.shape)
            _convkernels.conv_bwd_dx(self.W.value, gout, s, dxp)
            return dxp[:, :, p:p + h, p:p + w] if p else dxp
        g2 = np.ascontiguousarray(gout.transpose(0, 2, 3, 1)).reshape(-1, self.out_channels)
        cols = self._im2col(xp, ho, wo)
        self.W.grad += (g2.T @ cols).reshape(self.W.value.shape)
        del cols
        self.b.grad += g2.sum(axis=0)
        dcols = (g2 @ self.W.value.reshape(self.out_channels, -1))
        dcols = dcols.reshape(b, ho, wo, self.in_channels, k, k)
        dxp = np.zeros(xp.shape)
        for ki in range(k):
            for kj in range(k):
                dxp[:, :, ki:ki + s * ho:s, kj:kj + s * wo:s] += \
                    dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w] if p else dxp


class GlobalAvgPool(Layer):
    """Mean over tokens for (B,S,C) input, over H,W for (B,C,H,W) input."""

    kind = "global_avg_pool"

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        if x.ndim == 3:
            out = x.mean(axis=1)
        elif x.ndim == 4:
            out = x.mean(axis=(2, 3))
        else:
            raise DimensionError(f"global_avg_pool: expected 3-D or 4-D input, got {x.shape}")
        self._cache = x.shape if train else None
        return out

    def backward(self, gout):
        shape = self._need_cache(self._cache)
        if len(shape) == 3:
            b, s, c = shape
            return np.broadcast_to(gout[:, None, :] / s, shape).copy()
        b, c, h, w = shape
        return np.broadcast_to(gout[:, :, None, None] / (h * w), shape).copy()


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False):
        self._cache = x.shape if train else None
        return x.reshape(x.shape[0], -1)

    def backward(self, gout):
        shape = self._need_cache(self._cache)
        return gout.reshape(shape)


class Residual(Layer):
    """y = x + block(x); the block must preserve shape."""

    kind = "residual"

    def __init__(self, block: Layer):
        self.block = block

    def children(self):
        return [("block", self.block)]

    def forward(self, x, train=False):
        return x + self.block.forward(x, train)

    def backward(self, gout):
        return gout + self.block.backward(gout)


class Sequential(Layer):
    """Named layer chain; the model container used by every architecture."""

    kind = "sequential"

    def __init__(self, layers):
        names = [n for n, _ in layers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate layer names")
        self.layers = list(layers)

    def children(self):
        return list(self.layers)

    def __getitem__(self, name: str) -> Layer:
        for n, layer in self.layers:
            if n == name:
                return layer
        raise KeyError(name)

    def names(self):
        return [n for n, _ in self.layers]

    def forward(self, x, train=False):
        for name, layer in self.layers:
            try:
                x = layer.forward(x, train)
            except DimensionError as e:
                raise DimensionError(f"layer {name!r}: {e}") from e
        return x

    def forward_with_taps(self, x, taps, train=False):
        """Forward pass that also returns the outputs of the named layers."""
        taps = set(taps)
        unknown = taps - set(self.names())
        if unknown:
            raise KeyError(f"unknown tap layer(s): {sorted(unknown)}")
        recorded = {}
        for name, layer in self.layers:
            try:
                x = layer.forward(x, train)
            except DimensionError as e:
                raise DimensionError(f"layer {name!r}: {e}") from e
            if name in taps:
                recorded[name] = x
        return x, recorded

    def backward(self, gout):
        for _, layer in reversed(self.layers):
            gout = layer.backward(gout)
        return gout
