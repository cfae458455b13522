"""MOLI (joint encoders + classifier, triplet-regularised) and Super.FELT
(triplet-trained encoders first, classifier second)."""

from __future__ import annotations

import numpy as np

from ..hyperparams import HyperParams
from ..losses import bce_with_logits, moli_loss
from ..neural_core import Sequential
from .base import Network, Phase, batch_triplet_loss, build_encoders, collect_params, split_columns


class _EncodersAndClassifier(Network):
    def __init__(self, in_dims, hp: HyperParams, rng: np.random.Generator):
        self.hp = hp
        self.in_dims = list(in_dims)
        self.encoders = build_encoders(self.in_dims, hp, rng)
        self.classifier = Sequential.build([hp.layer_dim * len(self.in_dims), 1], ["identity"], [0.0], rng,
                                           "classifier")

    @property
    def latent_widths(self) -> list[int]:
        return [e.out_dim for e in self.encoders]

    def params(self):
        return collect_params(*self.encoders, self.classifier)

    def _encode(self, xs, train, rng):
        outs, caches = [], []
        for enc, x in zip(self.encoders, xs):
            h, c = enc.forward(x, train, rng)
            outs.append(h)
            caches.append(c)
        return outs, caches

    def predict_logits(self, xs):
        hs, _ = self._encode(xs, False, None)
        return self.classifier.forward(np.concatenate(hs, axis=1))[0][:, 0]


class MOLINet(_EncodersAndClassifier):
    """Per-omics encoders, classifier on the concatenated latents.

    Trained end to end on BCE plus ``gamma`` times the triplet loss of the
    concatenated latent representation.
    """

    def loss_and_grads(self, xs, y, rng, phase="joint", train=True):
        hs, enc_caches = self._encode(xs, train, rng)
        z = np.concatenate(hs, axis=1)
        logit, cls_cache = self.classifier.forward(z, train, rng)
        cls_loss, dlogit = bce_with_logits(logit[:, 0], y)
        dz, grads = self.classifier.backward(dlogit[:, None], cls_cache)
        trip = 0.0
        if self.hp.gamma > 0:
            trip, dtrip = batch_triplet_loss(z, y, self.hp.margin)
            dz = dz + self.hp.gamma * dtrip
        for enc, c, d in zip(self.encoders, enc_caches, split_columns(dz, self.latent_widths)):
            grads.update(enc.backward(d, c)[1])
        return moli_loss(cls_loss, trip, self.hp.gamma), grads


class SuperFELTNet(_EncodersAndClassifier):
    """Two phases: each encoder learns its own triplet embedding, then the
    encoders are frozen and a classifier is fit on their concatenation."""

    def phases(self):
        enc = tuple(k for e in self.encoders for k in e.params())
        return [Phase("encode", enc), Phase("classify", tuple(self.classifier.params()))]

    def loss_and_grads(self, xs, y, rng, phase="encode", train=True):
        if phase == "encode":
            total, grads = 0.0, {}
            for enc, x in zip(self.encoders, xs):
                h, c = enc.forward(x, train, rng)
                loss, dh = batch_triplet_loss(h, y, self.hp.margin)
                total += loss
                grads.update(enc.backward(dh, c)[1])
            return total, grads
        if phase == "classify":
            # frozen encoders run in inference mode
            hs, _ = self._encode(xs, False, None)
            logit, cache = self.classifier.forward(np.concatenate(hs, axis=1), train, rng)
            loss, dlogit = bce_with_logits(logit[:, 0], y)
            return loss, self.classifier.backward(dlogit[:, None], cache)[1]
        raise ValueError(f"unknown phase {phase!r}")

    def latents(self, xs) -> list[np.ndarray]:
        return self._encode(xs, False, None)[0]
