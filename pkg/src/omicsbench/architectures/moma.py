"""Module encoders with cross-omics module attention.

Each omics block is encoded into ``K`` unit-length 2-D module vectors. For
every other omics block, cosine similarities between its modules and this
block's modules are row-softmaxed into an attention matrix that re-weights
this block's modules. The attended modules are flattened and mapped to one
logit per omics; a logistic regression fit afterwards combines them.
"""

from __future__ import annotations

import numpy as np

from ..hyperparams import HyperParams
from ..losses import bce_with_logits
from ..neural_core import Sequential, softmax, softmax_backward
from .base import Network, collect_params

MODULE_DIM = 2
# norms below this are divided by the floor instead (linear, bounded gradient)
NORM_FLOOR = 1e-6


def normalize_modules(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale each module vector (last axis) to unit length; returns (v, norms)."""
    norm = np.sqrt(np.sum(u * u, axis=-1, keepdims=True))
    return u / np.maximum(norm, NORM_FLOOR), norm


def normalize_backward(dv: np.ndarray, v: np.ndarray, norm: np.ndarray) -> np.ndarray:
    radial = np.where(norm > NORM_FLOOR, np.sum(dv * v, axis=-1, keepdims=True), 0.0)
    return (dv - v * radial) / np.maximum(norm, NORM_FLOOR)


def cosine_similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity between rows of ``a`` (..., K, d) and ``b`` (..., K', d)."""
    an, _ = normalize_modules(a)
    bn, _ = normalize_modules(b)
    return an @ np.swapaxes(bn, -1, -2)


def _bounded_row_softmax(s: np.ndarray) -> np.ndarray:
    # similarities of (at most) unit vectors lie in [-1, 1], so exp needs no shift
    e = np.exp(s)
    e /= e.sum(axis=-1, keepdims=True)
    return e


def module_attention(query: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Row-softmaxed cosine similarities, shape (..., K_query, K_keys)."""
    return softmax(cosine_similarity_matrix(query, keys), axis=-1)


class MOMANet(Network):

    def __init__(self, in_dims, hp: HyperParams, rng: np.random.Generator):
        if len(in_dims) < 2:
            raise ValueError("MOMA needs at least two omics blocks for module attention")
        self.in_dims = list(in_dims)
        self.k = hp.module_count
        self.encoders = [Sequential.build([d, hp.layer_dim, self.k * MODULE_DIM], ["relu", "identity"],
                                          [hp.dropout_rate, 0.0], rng, f"module_encoder{i}")
                         for i, d in enumerate(self.in_dims)]
        self.heads = [Sequential.build([self.k * MODULE_DIM, 1], ["identity"], [0.0], rng, f"head{i}")
                      for i in range(len(self.in_dims))]

    def params(self):
        return collect_params(*self.encoders, *self.heads)

    def modules(self, xs, train=False, rng=None):
        """Unit module vectors per omics, each (n, K, 2), plus backward state."""
        vs, states = [], []
        for enc, x in zip(self.encoders, xs):
            u, caches = enc.forward(x, train, rng)
            v, norm = normalize_modules(u.reshape(len(x), self.k, MODULE_DIM))
            vs.append(v)
            states.append((caches, norm))
        return vs, states

    def attend(self, vs):
        """Attended modules per omics and the attention matrices used.

        ``att[(q, m)]`` holds softmax over m's modules of the similarity with
        each of q's modules.
        """
        m_count = len(vs)
        hs, att = [], {}
        for m in range(m_count):
            h = np.zeros_like(vs[m])
            for q in range(m_count):
                if q == m:
                    continue
                a = _bounded_row_softmax(vs[q] @ np.swapaxes(vs[m], 1, 2))
                att[(q, m)] = a
                h += a @ vs[m]
            hs.append(h / (m_count - 1))
        return hs, att

    def _logits(self, hs, train, rng):
        out, caches = [], []
        for head, h in zip(self.heads, hs):
            logit, c = head.forward(h.reshape(len(h), -1), train, rng)
            out.append(logit[:, 0])
            caches.append(c)
        return out, caches

    def loss_and_grads(self, xs, y, rng, phase="joint", train=True):
        vs, states = self.modules(xs, train, rng)
        hs, att = self.attend(vs)
        logits, head_caches = self._logits(hs, train, rng)
        m_count = len(vs)
        total, grads = 0.0, {}
        dvs = [np.zeros_like(v) for v in vs]
        for m in range(m_count):
            loss, dlogit = bce_with_logits(logits[m], y)
            total += loss
            dflat, g = self.heads[m].backward(dlogit[:, None], head_caches[m])
            grads.update(g)
            dh = dflat.reshape(hs[m].shape) / (m_count - 1)
            for q in range(m_count):
                if q == m:
                    continue
                a = att[(q, m)]
                da = dh @ np.swapaxes(vs[m], 1, 2)
                dvs[m] += np.swapaxes(a, 1, 2) @ dh
                dc = softmax_backward(da, a, axis=2)
                dvs[q] += dc @ vs[m]
                dvs[m] += np.swapaxes(dc, 1, 2) @ vs[q]
        for enc, v, dv, (caches, norm) in zip(self.encoders, vs, dvs, states):
            du = normalize_backward(dv, v, norm).reshape(len(v), -1)
            grads.update(enc.backward(du, caches)[1])
        return total, grads

    def omics_logits(self, xs) -> np.ndarray:
        vs, _ = self.modules(xs)
        hs, _ = self.attend(vs)
        return np.stack(self._logits(hs, False, None)[0], axis=1)

    def predict_logits(self, xs):
        # uncombined fallback; TrainedModel applies the fitted logistic regression
        return self.omics_logits(xs).mean(axis=1)
