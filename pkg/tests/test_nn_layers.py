"""Layer-by-layer gradient checks against the finite-difference oracle,
plus the analytic forward fixtures."""

import numpy as np
import pytest

from helpers import REL_TOL, grad_check, input_grad_check
from palsyfuse import nn
from palsyfuse.errors import DimensionError, StateError
from palsyfuse.nn import layers as L


def rng():
    return np.random.default_rng(0)


def head(in_width, r):
    return [("head", nn.Linear(in_width, 1, r, init="xavier")), ("out", nn.Sigmoid())]


def labels(n, seed=3):
    return (np.random.default_rng(seed).random(n) > 0.5).astype(float)


class TestForwardFixtures:
    def test_linear_identity(self):
        lin = nn.Linear(4, 4, rng())
        lin.W.value[...] = np.eye(4)
        lin.b.value[...] = 0.0
        x = np.arange(8.0).reshape(2, 4)
        assert np.array_equal(lin.forward(x), x)

    def test_sigmoid_at_zero(self):
        assert nn.Sigmoid().forward(np.zeros((1, 1)))[0, 0] == 0.5

    def test_batchnorm_hand_computed(self):
        bn = nn.BatchNorm1d(1)
        out = bn.forward(np.array([[1.0], [3.0]]), train=True)
        assert np.allclose(out.reshape(-1), [-1.0, 1.0], atol=1e-4)

    def test_batchnorm_train_stats(self):
        bn = nn.BatchNorm1d(5)
        x = np.random.default_rng(1).normal(3.0, 2.0, size=(64, 5))
        out = bn.forward(x, train=True)
        assert np.all(np.abs(out.mean(axis=0)) < 1e-6)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 1e-3)

    def test_relu_and_leaky(self):
        x = np.array([[-2.0, 3.0]])
        assert np.array_equal(nn.ReLU().forward(x), [[0.0, 3.0]])
        assert np.allclose(nn.LeakyReLU(0.01).forward(x), [[-0.02, 3.0]])

    def test_gelu_analytic_points(self):
        g = nn.GELU()
        assert g.forward(np.array([0.0]))[0] == 0.0
        # x*Phi(x) at x=1: Phi(1) = 0.841344746...
        assert abs(g.forward(np.array([1.0]))[0] - 0.8413447460685429) < 1e-12

    def test_dropout_eval_identity(self):
        d = nn.Dropout(0.4, seed=1)
        x = np.random.default_rng(2).normal(size=(8, 8))
        assert np.array_equal(d.forward(x, train=False), x)

    def test_dropout_train_fraction_and_scale(self):
        d = nn.Dropout(0.25, seed=7)
        x = np.ones((200, 200))
        out = d.forward(x, train=True)
        zero_frac = (out == 0.0).mean()
        assert abs(zero_frac - 0.25) < 0.02  # binomial tolerance
        survivors = out[out != 0.0]
        assert np.allclose(survivors, 1.0 / 0.75)

    def test_dropout_reproducible_with_seed(self):
        x = np.random.default_rng(0).normal(size=(16, 16))
        a = nn.Dropout(0.5, seed=99).forward(x, train=True)
        b = nn.Dropout(0.5, seed=99).forward(x, train=True)
        assert np.array_equal(a, b)

    def test_patch_partition_identity(self):
        rng = np.random.default_rng(3)
        for size, patch, channels in [(16, 4, 3), (32, 8, 1), (12, 3, 3),
                                      (24, 24, 3), (8, 2, 2)]:
            x = rng.normal(size=(2, channels, size, size))
            patches = nn.extract_patches(x, patch)
            assert patches.shape == (2, (size // patch) ** 2,
                                     channels * patch * patch)
            back = nn.fold_patches(patches, channels, size, size, patch)
            assert np.array_equal(back, x)

    def test_residual_zero_block_is_identity(self):
        r = rng()
        block = nn.Sequential([
            ("conv1", nn.Conv2d(4, 4, 3, r)),
            ("act", nn.ReLU()),
            ("conv2", nn.Conv2d(4, 4, 3, r, init="zero")),
        ])
        for _, p in nn.named_params(block):
            p.value[...] = 0.0
        res = nn.Residual(block)
        x = np.random.default_rng(4).normal(size=(2, 4, 8, 8))
        assert np.array_equal(res.forward(x), x)

    def test_channel_mix_token_equivariant(self):
        cm = nn.ChannelMix(6, 11, rng())
        x = np.random.default_rng(5).normal(size=(2, 7, 6))
        perm = np.random.default_rng(6).permutation(7)
        direct = cm.forward(x)
        permuted = cm.forward(x[:, perm, :])
        unpermuted = np.empty_like(permuted)
        unpermuted[:, perm, :] = permuted
        assert np.array_equal(direct, unpermuted)

    def test_global_avg_pool_both_layouts(self):
        g = nn.GlobalAvgPool()
        x3 = np.arange(24.0).reshape(2, 3, 4)
        assert np.allclose(g.forward(x3), x3.mean(axis=1))
        x4 = np.arange(48.0).reshape(2, 3, 2, 4)
        assert np.allclose(g.forward(x4), x4.mean(axis=(2, 3)))

    def test_conv_compiled_matches_fallback(self):
        for stride in (1, 2):
            a = nn.Conv2d(3, 5, 3, np.random.default_rng(8), stride=stride)
            b = nn.Conv2d(3, 5, 3, np.random.default_rng(8), stride=stride)
            b.compiled = False
            x = np.random.default_rng(9).normal(size=(2, 3, 9, 9))
            ya = a.forward(x, train=True)
            yb = b.forward(x, train=True)
            assert np.allclose(ya, yb, atol=1e-12)
            g = np.random.default_rng(10).normal(size=ya.shape)
            assert np.allclose(a.backward(g), b.backward(g), atol=1e-12)
            assert np.allclose(a.W.grad, b.W.grad, atol=1e-12)


class TestStateAndShapeErrors:
    def test_backward_before_forward(self):
        lin = nn.Linear(3, 2, rng())
        with pytest.raises(StateError):
            lin.backward(np.ones((1, 2)))

    def test_backward_after_eval_forward(self):
        lin = nn.Linear(3, 2, rng())
        lin.forward(np.ones((1, 3)), train=False)
        with pytest.raises(StateError):
            lin.backward(np.ones((1, 2)))

    def test_shape_mismatch_names_layer(self):
        net = nn.Sequential([("lin1", nn.Linear(3, 2, rng()))])
        with pytest.raises(DimensionError, match="lin1"):
            net.forward(np.ones((1, 4)))

    def test_patch_embed_indivisible(self):
        with pytest.raises(DimensionError, match="divisible"):
            nn.PatchEmbed(10, 3, 1, 4, rng())


# per-layer gradient checks: each layer kind embedded in a tiny sigmoid/BCE net
def _check(net, x, y, **kw):
    err = grad_check(net, x, y, **kw)
    assert err < REL_TOL, f"worst relative error {err}"


class TestGradients:
    def test_linear(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(5, 3, r))] + head(3, r))
        _check(net, r.normal(size=(4, 5)), labels(4))

    def test_relu(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(5, 6, r)), ("act", nn.ReLU())] + head(6, r))
        _check(net, r.normal(size=(4, 5)), labels(4))

    def test_leaky_relu(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(5, 6, r)), ("act", nn.LeakyReLU(0.01))] + head(6, r))
        _check(net, r.normal(size=(4, 5)), labels(4))

    def test_gelu(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(5, 6, r)), ("act", nn.GELU())] + head(6, r))
        _check(net, r.normal(size=(4, 5)), labels(4))

    def test_sigmoid_hidden(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(5, 6, r)), ("act", nn.Sigmoid())] + head(6, r))
        _check(net, r.normal(size=(4, 5)), labels(4))

    def test_dropout(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(6, 8, r)), ("drop", nn.Dropout(0.35, seed=5))]
                            + head(8, r))
        _check(net, r.normal(size=(5, 6)), labels(5))

    def test_batchnorm(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(5, 6, r)), ("bn", nn.BatchNorm1d(6))] + head(6, r))
        _check(net, r.normal(size=(6, 5)), labels(6))

    def test_layernorm(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(5, 6, r)), ("ln", nn.LayerNorm(6))] + head(6, r))
        _check(net, r.normal(size=(4, 5)), labels(4))

    def test_conv2d_both_strides(self):
        r = rng()
        net = nn.Sequential([
            ("conv1", nn.Conv2d(2, 4, 3, r)),
            ("act", nn.ReLU()),
            ("conv2", nn.Conv2d(4, 3, 3, r, stride=2)),
            ("pool", nn.GlobalAvgPool()),
        ] + head(3, r))
        _check(net, r.normal(size=(3, 2, 9, 9)), labels(3))

    def test_conv2d_fallback_path(self):
        r = rng()
        conv = nn.Conv2d(2, 3, 3, r)
        conv.compiled = False
        net = nn.Sequential([("conv", conv), ("pool", nn.GlobalAvgPool())] + head(3, r))
        _check(net, r.normal(size=(2, 2, 8, 8)), labels(2))

    def test_patch_embed(self):
        r = rng()
        net = nn.Sequential([("patch", nn.PatchEmbed(8, 4, 3, 6, r)),
                             ("pool", nn.GlobalAvgPool())] + head(6, r))
        _check(net, r.normal(size=(2, 3, 8, 8)), labels(2))

    def test_token_mix(self):
        r = rng()
        net = nn.Sequential([("patch", nn.PatchEmbed(8, 4, 1, 6, r)),
                             ("mix", nn.TokenMix(4, 5, r)),
                             ("pool", nn.GlobalAvgPool())] + head(6, r))
        _check(net, r.normal(size=(2, 1, 8, 8)), labels(2))

    def test_channel_mix(self):
        r = rng()
        net = nn.Sequential([("patch", nn.PatchEmbed(8, 4, 1, 6, r)),
                             ("mix", nn.ChannelMix(6, 9, r)),
                             ("pool", nn.GlobalAvgPool())] + head(6, r))
        _check(net, r.normal(size=(2, 1, 8, 8)), labels(2))

    def test_residual(self):
        r = rng()
        net = nn.Sequential([
            ("lin", nn.Linear(5, 6, r)),
            ("res", nn.Residual(nn.Sequential([("inner", nn.Linear(6, 6, r)),
                                               ("act", nn.GELU())]))),
        ] + head(6, r))
        _check(net, r.normal(size=(4, 5)), labels(4))

    def test_flatten(self):
        r = rng()
        net = nn.Sequential([("conv", nn.Conv2d(1, 2, 3, r)), ("flat", nn.Flatten())]
                            + head(2 * 36, r))
        _check(net, r.normal(size=(2, 1, 6, 6)), labels(2))

    def test_zero_upstream_gradient(self):
        r = rng()
        net = nn.Sequential([("lin", nn.Linear(4, 3, r)), ("bn", nn.BatchNorm1d(3)),
                             ("act", nn.ReLU())] + head(3, r))
        nn.zero_grads(net)
        net.forward(r.normal(size=(4, 4)), train=True)
        net.backward(np.zeros((4, 1)))
        for _, p in nn.named_params(net):
            assert np.all(p.grad == 0.0)

    def test_input_gradients(self):
        r = rng()
        for layer, shape in [
            (nn.LayerNorm(6), (3, 6)),
            (nn.BatchNorm1d(6), (5, 6)),
            (nn.GELU(), (3, 6)),
            (nn.TokenMix(4, 3, r), (2, 4, 5)),
            (nn.Conv2d(2, 3, 3, r), (2, 2, 7, 7)),
        ]:
            err = input_grad_check(layer, np.random.default_rng(11).normal(size=shape))
            assert err < REL_TOL, f"{layer.kind}: {err}"
