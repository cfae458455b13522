"""Supervised VAE: per-omics encoders into one Gaussian latent, per-omics
decoders, and a classifier on the latent. Trained in three phases (VAE,
frozen-VAE classifier, joint fine-tuning).

Each omics block is mapped affinely into the shared mean and log-variance
(the contributions add up, which is one dense layer on the concatenated
input). There is no hidden layer on either side: with a latent as wide as
1024 a hidden encoder would need a (3 * 1024) x 1024 layer for mu and another
for the log-variance, which dominates the whole benchmark's runtime.
"""

from __future__ import annotations

import numpy as np

from ..hyperparams import HyperParams
from ..losses import bce_with_logits, kl_from_logvar, omiembed_total_loss
from ..neural_core import Sequential, sigmoid
from .base import Network, Phase, collect_params


class OmiEmbedNet(Network):

    def __init__(self, in_dims, hp: HyperParams, rng: np.random.Generator):
        self.in_dims = list(in_dims)
        self.lam = hp.gamma
        latent = hp.layer_dim
        joint = sum(self.in_dims)
        self.mu_layer = Sequential.build([joint, latent], ["identity"], [0.0], rng, "mu")
        self.logvar_layer = Sequential.build([joint, latent], ["identity"], [0.0], rng, "logvar")
        # single-layer decoders keep the parameter count close to the encoder side
        self.decoders = [Sequential.build([latent, d], ["identity"], [0.0], rng, f"decoder{i}")
                         for i, d in enumerate(self.in_dims)]
        self.classifier = Sequential.build([latent, 1], ["identity"], [0.0], rng, "classifier")

    def vae_params(self):
        return collect_params(self.mu_layer, self.logvar_layer, *self.decoders)

    def params(self):
        return {**self.vae_params(), **self.classifier.params()}

    def phases(self):
        return [Phase("embed", tuple(self.vae_params())),
                Phase("classify", tuple(self.classifier.params())),
                Phase("finetune", tuple(self.params()))]

    def encode(self, xs, train=False, rng=None):
        joint = np.concatenate(xs, axis=1)
        mu, mu_c = self.mu_layer.forward(joint, train, rng)
        logvar, lv_c = self.logvar_layer.forward(joint, train, rng)
        return mu, logvar, (mu_c, lv_c)

    def reconstruct(self, xs) -> list[np.ndarray]:
        mu, _, _ = self.encode(xs)
        return [sigmoid(dec.forward(mu)[0]) for dec in self.decoders]

    def loss_and_grads(self, xs, y, rng, phase="finetune", train=True):
        if phase not in ("embed", "classify", "finetune"):
            raise ValueError(f"unknown phase {phase!r}")
        mu, logvar, (mu_c, lv_c) = self.encode(xs, train, rng)
        if train:
            eps = rng.standard_normal(mu.shape)
            std = np.exp(0.5 * logvar)
            z = mu + std * eps
        else:
            z = mu
        grads: dict[str, np.ndarray] = {}
        dz = np.zeros_like(z)

        ce = 0.0
        if phase in ("classify", "finetune"):
            logit, cls_c = self.classifier.forward(z, train, rng)
            ce, dlogit = bce_with_logits(logit[:, 0], y)
            dzc, g = self.classifier.backward(dlogit[:, None], cls_c)
            grads.update(g)
            dz += dzc
        if phase == "classify":
            return ce, grads

        w = 1.0 if phase == "embed" else self.lam
        embed = 0.0
        m_count = len(xs)
        for dec, x in zip(self.decoders, xs):
            out, dec_c = dec.forward(z, train, rng)
            rec, dout = bce_with_logits(out, x)
            embed += rec / m_count
            dzd, g = dec.backward(dout * (w / m_count), dec_c)
            grads.update(g)
            dz += dzd
        kl, dmu_kl, dlv_kl = kl_from_logvar(mu, logvar)
        embed += kl
        dmu = dz + w * dmu_kl
        dlv = w * dlv_kl
        if train:
            dlv = dlv + dz * eps * 0.5 * std
        grads.update(self.mu_layer.backward(dmu, mu_c)[1])
        grads.update(self.logvar_layer.backward(dlv, lv_c)[1])
        loss = embed if phase == "embed" else omiembed_total_loss(embed, ce, self.lam)
        return loss, grads

    def predict_logits(self, xs):
        mu, _, _ = self.encode(xs)
        return self.classifier.forward(mu)[0][:, 0]
