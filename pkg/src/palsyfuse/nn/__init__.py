"""Minimal deterministic neural-network engine (64-bit, hand-written backward)."""

from .layers import (BatchNorm1d, ChannelMix, Conv2d, Dropout, Flatten, GELU,
                     GlobalAvgPool, LayerNorm, LeakyReLU, Linear, Param, PatchEmbed,
                     ReLU, Residual, Sequential, Sigmoid, TokenMix,
                     extract_patches, fold_patches, named_params, named_state,
                     recalibrate_batchnorm, reseed_dropout, zero_grads)
from .losses import bce_loss
from .optim import SGD, AdamW, make_optimizer
from .weights_io import load_weights, save_weights

__all__ = [
    "BatchNorm1d", "ChannelMix", "Conv2d", "Dropout", "Flatten", "GELU",
    "GlobalAvgPool", "LayerNorm", "LeakyReLU", "Linear", "Param", "PatchEmbed",
    "ReLU", "Residual", "Sequential", "Sigmoid", "TokenMix",
    "extract_patches", "fold_patches", "named_params", "named_state",
    "recalibrate_batchnorm", "reseed_dropout", "zero_grads",
    "bce_loss", "SGD", "AdamW", "make_optimizer", "load_weights", "save_weights",
]
