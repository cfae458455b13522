from __future__ import annotations

import numpy as np

from ..hyperparams import HyperParams
from ..losses import bce_with_logits
from ..neural_core import Sequential
from .base import Network


class EarlyIntegrationNet(Network):
    """Concatenate all blocks, then one encoder and a logistic output."""

    def __init__(self, in_dims, hp: HyperParams, rng: np.random.Generator):
        self.in_dims = list(in_dims)
        self.encoder = Sequential.build([sum(self.in_dims), hp.layer_dim], ["relu"], [hp.dropout_rate], rng, "encoder")
        self.classifier = Sequential.build([hp.layer_dim, 1], ["identity"], [0.0], rng, "classifier")

    def params(self):
        return {**self.encoder.params(), **self.classifier.params()}

    def loss_and_grads(self, xs, y, rng, phase="joint", train=True):
        x = np.concatenate(xs, axis=1)
        h, enc_cache = self.encoder.forward(x, train, rng)
        logit, cls_cache = self.classifier.forward(h, train, rng)
        loss, dlogit = bce_with_logits(logit[:, 0], y)
        dh, grads = self.classifier.backward(dlogit[:, None], cls_cache)
        _, g_enc = self.encoder.backward(dh, enc_cache)
        grads.update(g_enc)
        return loss, grads

    def predict_logits(self, xs):
        h, _ = self.encoder.forward(np.concatenate(xs, axis=1))
        return self.classifier.forward(h)[0][:, 0]
