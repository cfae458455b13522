"""Shared pieces for the integration networks: per-omics encoders, the
minibatch training loop and phase bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..hyperparams import HyperParams
from ..losses import mine_all_triplets, triplet_loss
from ..neural_core import Adagrad, Sequential, sigmoid


@dataclass(frozen=True)
class Phase:
    name: str
    trainable: tuple[str, ...]


class Network:
    """Interface every integration network implements.

    ``loss_and_grads`` returns the phase loss on one batch and a gradient for
    at least every parameter trainable in that phase.
    """

    def params(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def phases(self) -> list[Phase]:
        return [Phase("joint", tuple(self.params()))]

    def loss_and_grads(self, xs: Sequence[np.ndarray], y: np.ndarray, rng: np.random.Generator | None,
                       phase: str, train: bool = True) -> tuple[float, dict[str, np.ndarray]]:
        raise NotImplementedError

    def predict_logits(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        return sigmoid(self.predict_logits(xs))


def build_encoders(in_dims: Sequence[int], hp: HyperParams, rng: np.random.Generator,
                   prefix: str = "encoder") -> list[Sequential]:
    """One hidden relu layer (with dropout) per omics block."""
    return [Sequential.build([d, hp.layer_dim], ["relu"], [hp.dropout_rate], rng, f"{prefix}{i}")
            for i, d in enumerate(in_dims)]


def collect_params(*stacks: Sequential) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for s in stacks:
        out.update(s.params())
    return out


def batch_triplet_loss(emb: np.ndarray, y: np.ndarray, margin: float) -> tuple[float, np.ndarray]:
    """Triplet loss over all in-batch triplets; zero when a class is absent."""
    trip = mine_all_triplets(y)
    return triplet_loss(emb, trip, margin)


def split_columns(d: np.ndarray, widths: Sequence[int]) -> list[np.ndarray]:
    return np.split(d, np.cumsum(widths)[:-1], axis=1)


@dataclass
class TrainingHistory:
    """Mean minibatch loss per epoch, per phase."""

    epochs: dict[str, list[float]] = field(default_factory=dict)


def fit_network(net: Network, xs: Sequence[np.ndarray], y: np.ndarray, hp: HyperParams,
                rng: np.random.Generator) -> TrainingHistory:
    """Minibatch Adagrad, one fresh optimizer per phase, ``hp.epochs`` per phase."""
    n = len(y)
    params = net.params()
    history = TrainingHistory()
    for phase in net.phases():
        opt = Adagrad(hp.learning_rate, hp.weight_decay)
        trainable = {k: params[k] for k in phase.trainable}
        per_epoch = history.epochs.setdefault(phase.name, [])
        for _ in range(hp.epochs):
            order = rng.permutation(n)
            total, batches = 0.0, 0
            for start in range(0, n, hp.batch_size):
                b = order[start:start + hp.batch_size]
                loss, grads = net.loss_and_grads([x[b] for x in xs], y[b], rng, phase.name)
                if not np.isfinite(loss):
                    raise FloatingPointError(f"non-finite loss in phase {phase.name!r}")
                opt.step(trainable, {k: grads[k] for k in trainable})
                total += loss
                batches += 1
            per_epoch.append(total / batches)
    return history
