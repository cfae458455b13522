from __future__ import annotations

from itertools import combinations

import numpy as np

from ..hyperparams import HyperParams
from ..losses import bce_with_logits, moli_loss
from ..neural_core import Sequential
from .base import Network, batch_triplet_loss, build_encoders, collect_params

STACKING_VARIANTS = ("standard", "stacking_complete", "stacking_no_integration", "stacking_no_triplet")


def head_subsets(n_omics: int, variant: str) -> list[tuple[int, ...]]:
    """Omics index subsets that get their own classifier head."""
    singles = [(i,) for i in range(n_omics)]
    full = tuple(range(n_omics))
    if variant in ("standard", "stacking_no_triplet"):
        return singles + ([full] if n_omics > 1 else [])
    if variant == "stacking_no_integration":
        return singles
    if variant == "stacking_complete":
        return [s for r in range(1, n_omics + 1) for s in combinations(range(n_omics), r)]
    raise ValueError(f"unknown stacking variant {variant!r}; expected one of {STACKING_VARIANTS}")


class OmicsStackingNet(Network):
    """Per-omics encoders feeding several sigmoid classifier heads, one per
    omics subset, whose outputs a dense meta-learner combines.

    The triplet term acts on the concatenation of all latents.
    """

    def __init__(self, in_dims, hp: HyperParams, rng: np.random.Generator, variant: str = "standard"):
        self.variant = variant
        self.gamma = 0.0 if variant == "stacking_no_triplet" else hp.gamma
        self.margin = hp.margin
        self.in_dims = list(in_dims)
        self.subsets = head_subsets(len(self.in_dims), variant)
        self.encoders = build_encoders(self.in_dims, hp, rng)
        self.heads = [Sequential.build([hp.layer_dim * len(s), 1], ["sigmoid"], [0.0], rng, f"head{j}")
                      for j, s in enumerate(self.subsets)]
        self.meta = Sequential.build([len(self.heads), 1], ["identity"], [0.0], rng, "meta")

    def params(self):
        return collect_params(*self.encoders, *self.heads, self.meta)

    def _forward(self, xs, train, rng):
        hs, enc_caches = [], []
        for enc, x in zip(self.encoders, xs):
            h, c = enc.forward(x, train, rng)
            hs.append(h)
            enc_caches.append(c)
        outs, head_caches = [], []
        for head, s in zip(self.heads, self.subsets):
            p, c = head.forward(np.concatenate([hs[i] for i in s], axis=1), train, rng)
            outs.append(p)
            head_caches.append(c)
        stacked = np.concatenate(outs, axis=1)
        logit, meta_cache = self.meta.forward(stacked, train, rng)
        return hs, enc_caches, head_caches, logit[:, 0], meta_cache

    def head_outputs(self, xs) -> np.ndarray:
        hs = [enc.forward(x)[0] for enc, x in zip(self.encoders, xs)]
        return np.concatenate([head.forward(np.concatenate([hs[i] for i in s], axis=1))[0]
                               for head, s in zip(self.heads, self.subsets)], axis=1)

    def loss_and_grads(self, xs, y, rng, phase="joint", train=True):
        hs, enc_caches, head_caches, logit, meta_cache = self._forward(xs, train, rng)
        cls_loss, dlogit = bce_with_logits(logit, y)
        dstack, grads = self.meta.backward(dlogit[:, None], meta_cache)
        dhs = [np.zeros_like(h) for h in hs]
        width = hs[0].shape[1]
        for j, (head, s) in enumerate(zip(self.heads, self.subsets)):
            dcat, g = head.backward(dstack[:, j:j + 1], head_caches[j])
            grads.update(g)
            for k, i in enumerate(s):
                dhs[i] += dcat[:, k * width:(k + 1) * width]
        trip = 0.0
        if self.gamma > 0:
            z = np.concatenate(hs, axis=1)
            trip, dz = batch_triplet_loss(z, y, self.margin)
            for i in range(len(hs)):
                dhs[i] += self.gamma * dz[:, i * width:(i + 1) * width]
        for enc, c, d in zip(self.encoders, enc_caches, dhs):
            grads.update(enc.backward(d, c)[1])
        return moli_loss(cls_loss, trip, self.gamma), grads

    def predict_logits(self, xs):
        return self._forward(xs, False, None)[3]
