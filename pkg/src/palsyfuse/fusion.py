"""Early fusion (concatenated embeddings -> trained head) and late fusion
(probability averaging) over two independently trained models.

Member models are frozen: early fusion only ever reads their embeddings, so
their weights are bit-identical before and after fusion training.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError
from .models import (ModelSpec, TrainedModel, TrainPlan, embed, predict_proba, train)

# pairing-specific learning rates for the early-fusion head
PAIRING_LR = {
    ("handcrafted29", "rgb_image"): 0.01,
    ("handcrafted29", "bnw_image"): 0.001,
}
DEFAULT_FUSION_LR = 0.01

DECISION_THRESHOLD = 0.5  # ties resolve to the positive class


def fusion_lr(modality_a: str, modality_b: str) -> float:
    for pair in ((modality_a, modality_b), (modality_b, modality_a)):
        if pair in PAIRING_LR:
            return PAIRING_LR[pair]
    return DEFAULT_FUSION_LR


def embedding_width(model: TrainedModel) -> int:
    return _tap_width(model.spec)


def _tap_width(spec: ModelSpec) -> int:
    if spec.arch == "ffn_expression":
        return 10
    if spec.arch == "ffn_coordinates":
        return 32
    if spec.arch == "ffn_handcrafted":
        return 59
    if spec.arch == "mixer_mini":
        return spec.hparams["dim"]
    if spec.arch == "resnet_mini":
        return 512
    raise ConfigError(f"no embedding tap width known for arch {spec.arch!r}")


def early_fusion_spec(a: TrainedModel, b: TrainedModel, seed: int = 0,
                      max_epochs: int = 100, lr: float | None = None) -> ModelSpec:
    in_width = _tap_width(a.spec) + _tap_width(b.spec)
    lr = lr if lr is not None else fusion_lr(a.spec.modality, b.spec.modality)
    return ModelSpec(
        name=f"early_fusion[{a.spec.name}+{b.spec.name}]",
        modality="fused_embedding",
        arch="fusion_head",
        hparams={"in_width": in_width},
        embedding_tap="act3",
        train_plan=TrainPlan("sgd", lr, 128, max_epochs, 3, seed),
    )


def concat_embeddings(a: TrainedModel, b: TrainedModel,
                      inputs_a: np.ndarray, inputs_b: np.ndarray) -> np.ndarray:
    if inputs_a.shape[0] != inputs_b.shape[0]:
        raise DimensionError(
            f"fusion: modality inputs disagree on sample count "
            f"({inputs_a.shape[0]} vs {inputs_b.shape[0]})")
    ea = embed(a, inputs_a)
    eb = embed(b, inputs_b)
    return np.concatenate([ea, eb], axis=1)


def early_fuse_train(a: TrainedModel, b: TrainedModel,
                     dataset: tuple[np.ndarray, np.ndarray, np.ndarray],
                     seed: int = 0, max_epochs: int = 100,
                     lr: float | None = None) -> TrainedModel:
    """Train the fusion head on frozen-member embeddings.

    dataset is (inputs for a, inputs for b, binary labels), sample-aligned.
    """
    inputs_a, inputs_b, y = dataset
    feats = concat_embeddings(a, b, inputs_a, inputs_b)
    spec = early_fusion_spec(a, b, seed=seed, max_epochs=max_epochs, lr=lr)
    if feats.shape[1] != spec.hparams["in_width"]:
        raise DimensionError(
            f"fusion: embedding width {feats.shape[1]} != head input "
            f"{spec.hparams['in_width']}")
    return train(spec, (feats, y))


def early_fuse_predict(head: TrainedModel, a: TrainedModel, b: TrainedModel,
                       inputs_a: np.ndarray, inputs_b: np.ndarray) -> np.ndarray:
    feats = concat_embeddings(a, b, inputs_a, inputs_b)
    return predict_proba(head, feats)


def late_fuse_predict(a: TrainedModel, b: TrainedModel,
                      inputs_a: np.ndarray, inputs_b: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Mean of the two member probabilities and the thresholded labels.

    Returns (probabilities, boolean labels); probability >= 0.5 is positive.
    """
    if inputs_a.shape[0] != inputs_b.shape[0]:
        raise DimensionError(
            f"late fusion: modality inputs disagree on sample count "
            f"({inputs_a.shape[0]} vs {inputs_b.shape[0]})")
    pa = predict_proba(a, inputs_a)
    pb = predict_proba(b, inputs_b)
    p = 0.5 * (pa + pb)
    return p, p >= DECISION_THRESHOLD
