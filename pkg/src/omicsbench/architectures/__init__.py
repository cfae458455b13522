"""The six integration methods plus the Omics Stacking ablations behind one
train/predict contract."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from sklearn.linear_model import LogisticRegression

from ..data import DataError, OmicsDataset, PreprocessState, apply_preprocessing, fit_preprocessing
from ..hyperparams import HyperParams
from ..neural_core import make_rng, sigmoid
from .base import Network, Phase, TrainingHistory, fit_network
from .early_integration import EarlyIntegrationNet
from .moli import MOLINet, SuperFELTNet
from .moma import MOMANet, cosine_similarity_matrix, module_attention, normalize_modules
from .omiembed import OmiEmbedNet
from .stacking import STACKING_VARIANTS, OmicsStackingNet, head_subsets

KINDS = ("early_integration", "moli", "super_felt", "omics_stacking", "moma", "omi_embed")

# benchmark method name -> (kind, variant)
METHODS: dict[str, tuple[str, str]] = {
    **{k: (k, "standard") for k in KINDS},
    "stacking_complete": ("omics_stacking", "stacking_complete"),
    "stacking_no_integration": ("omics_stacking", "stacking_no_integration"),
    "stacking_no_triplet": ("omics_stacking", "stacking_no_triplet"),
}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    omics_names: tuple[str, ...]
    hyperparams: HyperParams = HyperParams()
    variant: str = "standard"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.variant not in STACKING_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant != "standard" and self.kind != "omics_stacking":
            raise ValueError("variants other than 'standard' only apply to omics_stacking")
        if not self.omics_names:
            raise ValueError("omics_names must be non-empty")

    @classmethod
    def for_method(cls, method: str, omics_names, hp: HyperParams) -> "ModelSpec":
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
        kind, variant = METHODS[method]
        return cls(kind, tuple(omics_names), hp, variant)


@dataclass
class LogisticMeta:
    coef: np.ndarray
    intercept: float

    def __call__(self, features: np.ndarray) -> np.ndarray:
        return sigmoid(features @ self.coef + self.intercept)


@dataclass
class TrainedModel:
    spec: ModelSpec
    network: Network
    preprocessing: PreprocessState
    meta: LogisticMeta | None = None
    history: TrainingHistory = field(default_factory=TrainingHistory)


def _check_trainable(data: OmicsDataset) -> None:
    counts = np.bincount(data.labels, minlength=2)
    if counts.min() < 2:
        raise DataError(f"training data needs at least 2 samples per class, got {counts.tolist()}")


def _build(spec: ModelSpec, in_dims, rng) -> Network:
    hp = spec.hyperparams
    if spec.kind == "early_integration":
        return EarlyIntegrationNet(in_dims, hp, rng)
    if spec.kind == "moli":
        return MOLINet(in_dims, hp, rng)
    if spec.kind == "super_felt":
        return SuperFELTNet(in_dims, hp, rng)
    if spec.kind == "omics_stacking":
        return OmicsStackingNet(in_dims, hp, rng, spec.variant)
    if spec.kind == "moma":
        return MOMANet(in_dims, hp, rng)
    return OmiEmbedNet(in_dims, hp, rng)


def train(spec: ModelSpec, data: OmicsDataset, rng: np.random.Generator | int) -> TrainedModel:
    """Fit preprocessing on ``data`` and train the network it describes."""
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(int(rng))
    _check_trainable(data)
    if list(spec.omics_names) != data.omics_names:
        raise DataError(f"spec omics {list(spec.omics_names)} do not match dataset blocks {data.omics_names}")
    if spec.kind == "moma" and len(spec.omics_names) < 2:
        raise ValueError("MOMA needs at least two omics blocks for module attention")
    state = fit_preprocessing(data, "minmax" if spec.kind == "omi_embed" else "standard")
    xs = apply_preprocessing(state, data)
    net = _build(spec, [x.shape[1] for x in xs], rng)
    history = fit_network(net, xs, data.labels.astype(np.float64), spec.hyperparams, rng)
    meta = None
    if spec.kind == "moma":
        probs = sigmoid(net.omics_logits(xs))
        lr = LogisticRegression().fit(probs, data.labels)
        meta = LogisticMeta(lr.coef_[0].copy(), float(lr.intercept_[0]))
    return TrainedModel(spec, net, state, meta, history)


def predict(model: TrainedModel, data: OmicsDataset) -> np.ndarray:
    """Response probability per sample; deterministic (no dropout, no sampling)."""
    if data.n_samples == 0:
        return np.zeros(0)
    xs = apply_preprocessing(model.preprocessing, data)
    if model.meta is not None:
        return model.meta(sigmoid(model.network.omics_logits(xs)))
    return model.network.predict_proba(xs)


def _trainer(kind: str, variant: str = "standard") -> Callable[..., TrainedModel]:
    def fn(data: OmicsDataset, hp: HyperParams, rng) -> TrainedModel:
        return train(ModelSpec(kind, tuple(data.omics_names), hp, variant), data, rng)
    fn.__name__ = f"train_{kind}"
    return fn


train_early_integration = _trainer("early_integration")
train_moli = _trainer("moli")
train_super_felt = _trainer("super_felt")
train_moma = _trainer("moma")
train_omi_embed = _trainer("omi_embed")


def train_omics_stacking(data: OmicsDataset, hp: HyperParams, rng, variant: str = "standard") -> TrainedModel:
    return train(ModelSpec("omics_stacking", tuple(data.omics_names), hp, variant), data, rng)


__all__ = [
    "KINDS", "METHODS", "ModelSpec", "TrainedModel", "LogisticMeta", "Network", "Phase",
    "EarlyIntegrationNet", "MOLINet", "SuperFELTNet", "OmicsStackingNet", "MOMANet", "OmiEmbedNet",
    "STACKING_VARIANTS", "head_subsets", "cosine_similarity_matrix", "module_attention", "normalize_modules",
    "train", "predict", "fit_network",
    "train_early_integration", "train_moli", "train_super_felt", "train_omics_stacking", "train_moma",
    "train_omi_embed",
]
