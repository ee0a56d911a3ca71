"""The model zoo: structured-data FFNs, patch-mixing and residual CNN image
classifiers, plus training, prediction, and embedding-tap extraction.

Every architecture ends in a single sigmoid unit trained with BCE. Each spec
fixes its own training schedule; epoch counts are defaults that callers may
lower for quick runs. Training is deterministic given the plan's seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DimensionError, TrainingDivergedError
from .nn import (BatchNorm1d, ChannelMix, Conv2d, Dropout, GELU, GlobalAvgPool,
                 LayerNorm, LeakyReLU, Linear, PatchEmbed, ReLU, Residual,
                 Sequential, Sigmoid, TokenMix, bce_loss, make_optimizer,
                 named_params, named_state, recalibrate_batchnorm, zero_grads)

MODALITY_WIDTHS = {"handcrafted29": 29, "expression52": 52, "coordinates956": 956}
IMAGE_MODALITIES = {"rgb_image": 3, "bnw_image": 1}

IMPROVE_TOL = 1e-6


@dataclass(frozen=True)
class TrainPlan:
    optimizer: str
    lr: float
    batch_size: int
    max_epochs: int
    patience: int | None
    seed: int

    def to_json_obj(self) -> dict:
        return {"optimizer": self.optimizer, "lr": self.lr, "batch_size": self.batch_size,
                "max_epochs": self.max_epochs, "patience": self.patience, "seed": self.seed}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    modality: str
    arch: str
    hparams: dict
    embedding_tap: str
    train_plan: TrainPlan

    def to_json_obj(self) -> dict:
        return {"name": self.name, "modality": self.modality, "arch": self.arch,
                "hparams": dict(self.hparams), "embedding_tap": self.embedding_tap,
                "train_plan": self.train_plan.to_json_obj()}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class TrainedModel:
    spec: ModelSpec
    net: Sequential
    loss_log: list = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return self.spec.config_hash()


# ---------------------------------------------------------------------------
# architectures

def _ffn_expression_net(hp: dict, rng) -> Sequential:
    return Sequential([
        ("lin1", Linear(52, 32, rng)), ("bn1", BatchNorm1d(32)), ("act1", ReLU()),
        ("lin2", Linear(32, 10, rng)), ("bn2", BatchNorm1d(10)), ("act2", ReLU()),
        ("head", Linear(10, 1, rng, init="xavier")), ("out", Sigmoid()),
    ])


def _ffn_coordinates_net(hp: dict, rng) -> Sequential:
    widths = [956, 512, 256, 128, 64, 32]
    drops = {1: 0.25, 2: 0.30, 3: 0.50, 4: 0.10}
    layers = []
    for i in range(1, len(widths)):
        layers += [(f"lin{i}", Linear(widths[i - 1], widths[i], rng)),
                   (f"bn{i}", BatchNorm1d(widths[i])),
                   (f"act{i}", ReLU())]
        if i in drops:
            layers.append((f"drop{i}", Dropout(drops[i], seed=int(rng.integers(2 ** 63)))))
    layers += [("head", Linear(32, 1, rng, init="xavier")), ("out", Sigmoid())]
    return Sequential(layers)


def _ffn_handcrafted_net(hp: dict, rng) -> Sequential:
    layers = []
    width_in = 29
    for i in range(1, 16):
        layers += [(f"lin{i}", Linear(width_in, 59, rng)),
                   (f"act{i}", ReLU()),
                   (f"bn{i}", BatchNorm1d(59))]
        width_in = 59
    layers += [("head", Linear(59, 1, rng, init="xavier")), ("out", Sigmoid())]
    return Sequential(layers)


def _mixer_mini_net(hp: dict, rng) -> Sequential:
    size = hp["image_size"]
    patch = hp["patch"]
    dim = hp["dim"]
    depth = hp["depth"]
    channels = hp["channels"]
    if size % patch != 0:
        raise ConfigError(f"mixer: image size {size} not divisible by patch {patch}")
    n_tokens = (size // patch) ** 2
    layers = [("patch", PatchEmbed(size, patch, channels, dim, rng))]
    for i in range(1, depth + 1):
        layers.append((f"block{i}_token", Residual(Sequential([
            ("norm", LayerNorm(dim)),
            ("mix", TokenMix(n_tokens, hp["token_mlp"], rng)),
        ]))))
        layers.append((f"block{i}_channel", Residual(Sequential([
            ("norm", LayerNorm(dim)),
            ("mix", ChannelMix(dim, hp["channel_mlp"], rng)),
        ]))))
    layers += [("norm", LayerNorm(dim)), ("pool", GlobalAvgPool()),
               ("head", Linear(dim, 1, rng, init="xavier")), ("out", Sigmoid())]
    return Sequential(layers)


def _conv_block(width: int, rng) -> Sequential:
    # conv2 starts at zero so each block begins as the identity; the
    # un-normalized trunk is unstable otherwise when trained from scratch
    return Sequential([
        ("conv1", Conv2d(width, width, 3, rng)),
        ("act", ReLU()),
        ("conv2", Conv2d(width, width, 3, rng, init="zero")),
    ])


def _resnet_mini_net(hp: dict, rng) -> Sequential:
    channels = hp["channels"]
    layers = [("stem", Conv2d(channels, 16, 3, rng)), ("stem_act", ReLU())]
    widths = [16, 32, 64]
    for stage, width in enumerate(widths, start=1):
        if stage > 1:
            layers += [(f"down{stage}", Conv2d(widths[stage - 2], width, 3, rng, stride=2)),
                       (f"down{stage}_act", ReLU())]
        for b in (1, 2):
            layers.append((f"s{stage}b{b}", Residual(_conv_block(width, rng))))
    layers += [
        ("pool", GlobalAvgPool()),
        ("fc1", Linear(64, 512, rng)),
        ("fc_act", ReLU()),
        ("fc_drop", Dropout(hp.get("head_dropout", 0.1), seed=int(rng.integers(2 ** 63)))),
        ("fc_bn", BatchNorm1d(512)),
        ("head", Linear(512, 1, rng, init="xavier")),
        ("out", Sigmoid()),
    ]
    return Sequential(layers)


def _fusion_head_net(hp: dict, rng) -> Sequential:
    in_width = hp["in_width"]
    layers = []
    widths = [in_width, 256, 64, 16]
    for i in range(1, len(widths)):
        layers += [(f"lin{i}", Linear(widths[i - 1], widths[i], rng)),
                   (f"bn{i}", BatchNorm1d(widths[i])),
                   (f"act{i}", LeakyReLU(0.01))]
    layers += [("head", Linear(16, 1, rng, init="xavier")), ("out", Sigmoid())]
    return Sequential(layers)


_ARCHS = {
    "ffn_expression": _ffn_expression_net,
    "ffn_coordinates": _ffn_coordinates_net,
    "ffn_handcrafted": _ffn_handcrafted_net,
    "mixer_mini": _mixer_mini_net,
    "resnet_mini": _resnet_mini_net,
    "fusion_head": _fusion_head_net,
}


def build_network(spec: ModelSpec) -> Sequential:
    rng = np.random.default_rng(spec.train_plan.seed)
    net = _ARCHS[spec.arch](spec.hparams, rng)
    if spec.embedding_tap not in net.names():
        raise ConfigError(f"{spec.name}: embedding tap {spec.embedding_tap!r} not in network")
    return net


def param_count(net: Sequential) -> int:
    return sum(p.value.size for _, p in named_params(net))


def weight_fingerprint(net: Sequential) -> str:
    h = hashlib.sha256()
    for name, arr in named_state(net):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# model builders (default training schedules; epoch counts overridable downward)

def build_ffn_expression(seed: int = 0, max_epochs: int = 1000) -> ModelSpec:
    return ModelSpec(name="ffn_expression", modality="expression52", arch="ffn_expression",
                     hparams={}, embedding_tap="act2",
                     train_plan=TrainPlan("sgd", 0.2045, 256, max_epochs, None, seed))


def build_ffn_coordinates(seed: int = 0, max_epochs: int = 3000) -> ModelSpec:
    return ModelSpec(name="ffn_coordinates", modality="coordinates956", arch="ffn_coordinates",
                     hparams={}, embedding_tap="act5",
                     train_plan=TrainPlan("sgd", 0.2045, 256, max_epochs, None, seed))


def build_ffn_handcrafted(seed: int = 0, max_epochs: int = 3000) -> ModelSpec:
    return ModelSpec(name="ffn_handcrafted", modality="handcrafted29", arch="ffn_handcrafted",
                     hparams={}, embedding_tap="bn15",
                     train_plan=TrainPlan("sgd", 0.2045, 256, max_epochs, None, seed))


def build_mixer_mini(image_size: int = 64, patch: int = 8, dim: int = 128,
                     token_mlp: int = 64, channel_mlp: int = 256, depth: int = 4,
                     channels: int = 3, schedule: str = "rgb", seed: int = 0,
                     max_epochs: int | None = None) -> ModelSpec:
    if image_size % patch != 0:
        raise ConfigError(f"mixer: image size {image_size} not divisible by patch {patch}")
    hp = {"image_size": image_size, "patch": patch, "dim": dim, "token_mlp": token_mlp,
          "channel_mlp": channel_mlp, "depth": depth, "channels": channels}
    if schedule == "rgb":
        plan = TrainPlan("sgd", 0.01, 256, max_epochs or 40, None, seed)
    elif schedule == "bnw":
        plan = TrainPlan("sgd", 0.01, 128, max_epochs or 100, 3, seed)
    else:
        raise ConfigError(f"mixer: unknown schedule {schedule!r}")
    modality = "rgb_image" if channels == 3 else "bnw_image"
    return ModelSpec(name=f"mixer_{schedule}", modality=modality, arch="mixer_mini",
                     hparams=hp, embedding_tap="pool", train_plan=plan)


def build_resnet_mini(channels: int = 3, schedule: str = "rgb", seed: int = 0,
                      max_epochs: int | None = None) -> ModelSpec:
    hp = {"channels": channels, "head_dropout": 0.1}
    if schedule == "rgb":
        plan = TrainPlan("sgd", 0.01, 256, max_epochs or 20, None, seed)
    elif schedule == "bnw":
        plan = TrainPlan("sgd", 0.01, 128, max_epochs or 100, 3, seed)
    else:
        raise ConfigError(f"resnet: unknown schedule {schedule!r}")
    modality = "rgb_image" if channels == 3 else "bnw_image"
    return ModelSpec(name=f"resnet_{schedule}", modality=modality, arch="resnet_mini",
                     hparams=hp, embedding_tap="fc_bn", train_plan=plan)


_SPEC_BUILDERS = {
    "ffn_expression": lambda seed, ov: build_ffn_expression(
        seed, ov.get("max_epochs", 1000)),
    "ffn_coordinates": lambda seed, ov: build_ffn_coordinates(
        seed, ov.get("max_epochs", 3000)),
    "ffn_handcrafted": lambda seed, ov: build_ffn_handcrafted(
        seed, ov.get("max_epochs", 3000)),
    "mixer_rgb": lambda seed, ov: build_mixer_mini(
        image_size=ov.get("image_size", 64), patch=ov.get("patch", 8),
        dim=ov.get("dim", 128), token_mlp=ov.get("token_mlp", 64),
        channel_mlp=ov.get("channel_mlp", 256), depth=ov.get("depth", 4),
        channels=3, schedule="rgb", seed=seed, max_epochs=ov.get("max_epochs")),
    "mixer_bnw": lambda seed, ov: build_mixer_mini(
        image_size=ov.get("image_size", 64), patch=ov.get("patch", 8),
        dim=ov.get("dim", 128), token_mlp=ov.get("token_mlp", 64),
        channel_mlp=ov.get("channel_mlp", 256), depth=ov.get("depth", 4),
        channels=1, schedule="bnw", seed=seed, max_epochs=ov.get("max_epochs")),
    "resnet_rgb": lambda seed, ov: build_resnet_mini(
        channels=3, schedule="rgb", seed=seed, max_epochs=ov.get("max_epochs")),
    "resnet_bnw": lambda seed, ov: build_resnet_mini(
        channels=1, schedule="bnw", seed=seed, max_epochs=ov.get("max_epochs")),
}

KNOWN_MODEL_NAMES = tuple(sorted(_SPEC_BUILDERS))

_OVERRIDE_KEYS = {"max_epochs", "image_size", "patch", "dim", "token_mlp",
                  "channel_mlp", "depth"}


def build_model_spec(name: str, seed: int = 0, overrides: dict | None = None) -> ModelSpec:
    if name not in _SPEC_BUILDERS:
        raise ConfigError(f"unknown model {name!r} (known: {', '.join(KNOWN_MODEL_NAMES)})")
    ov = dict(overrides or {})
    unknown = set(ov) - _OVERRIDE_KEYS
    if unknown:
        raise ConfigError(f"model {name}: unknown override keys {sorted(unknown)}")
    return _SPEC_BUILDERS[name](seed, ov)


# ---------------------------------------------------------------------------
# training / inference

def check_inputs(spec: ModelSpec, X: np.ndarray) -> None:
    if spec.modality in MODALITY_WIDTHS:
        want = MODALITY_WIDTHS[spec.modality]
        if X.ndim != 2 or X.shape[1] != want:
            raise DimensionError(
                f"{spec.name}: expected ({X.shape[0] if X.ndim else '?'}, {want}) "
                f"{spec.modality} input, got {X.shape}")
    elif spec.modality in IMAGE_MODALITIES:
        want_ch = IMAGE_MODALITIES[spec.modality]
        if X.ndim != 4 or X.shape[1] != want_ch:
            raise DimensionError(
                f"{spec.name}: expected (batch, {want_ch}, H, W) image input, got {X.shape}")
    elif X.ndim != 2:
        # embedding-style inputs: width is checked by the first linear layer
        raise DimensionError(f"{spec.name}: expected a 2-D input, got {X.shape}")


def train(spec: ModelSpec, dataset: tuple[np.ndarray, np.ndarray]) -> TrainedModel:
    """Mini-batch training per the spec's plan; logs per-epoch mean BCE."""
    X, y = dataset
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] == 0:
        raise ConfigError(f"{spec.name}: empty training dataset")
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"{spec.name}: {X.shape[0]} inputs vs {y.shape[0]} labels")
    check_inputs(spec, X)

    net = build_network(spec)
    plan = spec.train_plan
    opt = make_optimizer(plan.optimizer, plan.lr)
    params = [p for _, p in named_params(net)]
    shuffle_rng = np.random.default_rng([plan.seed, 0x5A11])

    n = X.shape[0]
    log: list[float] = []
    best = np.inf
    streak = 0
    for epoch in range(1, plan.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, plan.batch_size):
            idx = order[start:start + plan.batch_size]
            xb, yb = X[idx], y[idx]
            zero_grads(net)
            out = net.forward(xb, train=True)
            loss, grad = bce_loss(out.reshape(-1), yb)
            total += loss * len(idx)
            net.backward(grad.reshape(out.shape))
            opt.step(params)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch)
        log.append(epoch_loss)
        if plan.patience is not None:
            if epoch_loss < best - IMPROVE_TOL:
                best = epoch_loss
                streak = 0
            else:
                streak += 1
                if streak >= plan.patience:
                    break
    # eval-mode outputs need running statistics that match the final weights
    recalibrate_batchnorm(net, X, plan.batch_size)
    return TrainedModel(spec=spec, net=net, loss_log=log)


def _batched_forward(model: TrainedModel, X: np.ndarray, tap: str | None,
                     batch: int = 512):
    check_inputs(model.spec, X)
    outs, taps = [], []
    for start in range(0, X.shape[0], batch):
        xb = X[start:start + batch]
        if tap is None:
            outs.append(model.net.forward(xb, train=False))
        else:
            out, rec = model.net.forward_with_taps(xb, [tap], train=False)
            outs.append(out)
            taps.append(rec[tap])
    out = np.concatenate(outs, axis=0)
    return (out, np.concatenate(taps, axis=0)) if tap is not None else (out, None)


def predict_proba(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Eval-mode sigmoid outputs, shape (N,)."""
    out, _ = _batched_forward(model, np.asarray(X, dtype=np.float64), None)
    return out.reshape(-1)


def embed(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Eval-mode activations at the spec's embedding tap, shape (N, width)."""
    _, tap = _batched_forward(model, np.asarray(X, dtype=np.float64),
                              model.spec.embedding_tap)
    return tap
