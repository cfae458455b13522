"""Loss functions with their gradients.

Each function returns the loss value together with the gradient(s) needed by
the manual backward passes in :mod:`omicsbench.architectures`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .neural_core import ShapeError, sigmoid

BCE_CLAMP = 1e-7


def bce_loss(predictions, targets) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on probabilities.

    Predictions are clamped to ``[1e-7, 1 - 1e-7]``; the returned gradient is
    with respect to the unclamped predictions (zero where the clamp is active).
    """
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"predictions {p.shape} and targets {t.shape} differ in shape")
    if p.size == 0:
        return 0.0, np.zeros_like(p)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -np.mean(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))
    inside = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    grad = np.where(inside, (pc - t) / (pc * (1.0 - pc)), 0.0) / p.size
    return float(loss), grad


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE of ``sigmoid(logits)``; stable for any logit magnitude."""
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if z.shape != t.shape:
        raise ShapeError(f"logits {z.shape} and targets {t.shape} differ in shape")
    if z.size == 0:
        return 0.0, np.zeros_like(z)
    loss = np.mean(np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z))))
    return float(loss), (sigmoid(z) - t) / z.size


@dataclass(frozen=True)
class TripletBatch:
    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self) -> int:
        return len(self.anchors)


def mine_all_triplets(labels) -> TripletBatch:
    """Every (anchor, positive, negative) index triple in a batch.

    Ordered lexicographically by anchor, then positive, then negative.
    """
    y = np.asarray(labels).ravel()
    n = len(y)
    same = y[:, None] == y[None, :]
    # valid[a, p, n]: p shares a's class (p != a), n does not
    pos_ok = same & ~np.eye(n, dtype=bool)
    valid = pos_ok[:, :, None] & ~same[:, None, :]
    a, p, neg = np.nonzero(valid)
    return TripletBatch(a, p, neg)


def triplet_count(labels) -> int:
    y = np.asarray(labels).ravel()
    n = len(y)
    return int(sum(c * (c - 1) * (n - c) for c in np.unique(y, return_counts=True)[1]))


def pairwise_sq_dists(emb: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances via the Gram matrix (clamped at 0)."""
    sq = np.einsum("ij,ij->i", emb, emb)
    d = sq[:, None] + sq[None, :] - 2.0 * (emb @ emb.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def triplet_loss(embeddings, triplets: TripletBatch, margin: float) -> tuple[float, np.ndarray]:
    """Summed hinge ``[|f(a)-f(p)|^2 - |f(a)-f(n)|^2 + margin]_+`` over triplets.

    Returns the loss and its (sub)gradient with respect to ``embeddings``.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ShapeError(f"embeddings must be 2-D, got shape {emb.shape}")
    grad = np.zeros_like(emb)
    if len(triplets) == 0:
        return 0.0, grad
    hi = max(triplets.anchors.max(), triplets.positives.max(), triplets.negatives.max())
    if hi >= emb.shape[0]:
        raise ShapeError(f"triplet index {hi} out of range for {emb.shape[0]} embeddings")
    a, p, n = triplets.anchors, triplets.positives, triplets.negatives
    dist = pairwise_sq_dists(emb)
    hinge = dist[a, p] - dist[a, n] + margin
    active = hinge > 0
    loss = float(hinge[active].sum())
    if not active.any():
        return loss, grad
    # dL/dD over the pairwise distance matrix, then chained to the embeddings
    m = emb.shape[0]
    g = (np.bincount(a[active] * m + p[active], minlength=m * m)
         - np.bincount(a[active] * m + n[active], minlength=m * m)).reshape(m, m).astype(np.float64)
    s = g + g.T
    grad = 2.0 * (s.sum(axis=1)[:, None] * emb - s @ emb)
    return loss, grad


def moli_loss(classification_loss: float, triplet: float, gamma: float) -> float:
    return classification_loss + gamma * triplet


def kl_divergence(mu, sigma) -> tuple[float, np.ndarray, np.ndarray]:
    """KL(N(mu, sigma^2) || N(0, 1)) summed over dimensions.

    Returns ``(value, d/dmu, d/dsigma)``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise ValueError("kl_divergence received non-finite input")
    if np.any(sigma <= 0):
        raise ValueError("sigma must be strictly positive")
    s2 = sigma ** 2
    value = 0.5 * np.sum(s2 + mu ** 2 - 1.0 - np.log(s2))
    return float(value), mu.copy(), sigma - 1.0 / sigma


def kl_from_logvar(mu: np.ndarray, logvar: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch-mean KL with the variance parameterised as log-variance."""
    n = mu.shape[0]
    value = 0.5 * np.sum(np.exp(logvar) + mu ** 2 - 1.0 - logvar) / n
    return float(value), mu / n, 0.5 * (np.exp(logvar) - 1.0) / n


def omiembed_embed_loss(inputs: Sequence[np.ndarray], reconstructions: Sequence[np.ndarray],
                        mu, sigma, names: Sequence[str] | None = None) -> float:
    """Mean per-omics reconstruction BCE plus the KL term."""
    if len(inputs) == 0:
        raise ValueError("need at least one omics block")
    if len(inputs) != len(reconstructions):
        raise ShapeError(f"{len(inputs)} inputs but {len(reconstructions)} reconstructions")
    names = list(names) if names is not None else [str(i) for i in range(len(inputs))]
    rec = 0.0
    for name, x, xr in zip(names, inputs, reconstructions):
        x = np.asarray(x, dtype=np.float64)
        xr = np.asarray(xr, dtype=np.float64)
        if x.shape != xr.shape:
            raise ShapeError(f"omics block {name!r}: reconstruction shape {xr.shape} != input {x.shape}")
        rec += bce_loss(xr, x)[0]
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    kl = kl_divergence(mu, sigma)[0] / mu.shape[0]
    return rec / len(inputs) + kl


def omiembed_total_loss(embed: float, ce: float, lam: float) -> float:
    return lam * embed + ce
