"""Rank-based AUROC and step-wise average precision (AUPRC)."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{len(s)} scores for {len(y)} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return s, y.astype(bool)


def auroc(scores, labels) -> float:
    """Mann-Whitney estimate ``P(s+ > s-) + P(s+ == s-) / 2`` from average ranks."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("undefined AUROC: labels contain a single class")
    ranks = rankdata(s)  # average ranks; all values are multiples of 0.5
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: sum of precision times recall increment over the
    distinct score thresholds, sweeping from the highest score down."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("undefined AUPRC: no positive labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of every block of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    precision = tp / (tp + fp)
    d_tp = np.diff(np.r_[0, tp])
    return float(np.sum(precision * d_tp) / n_pos)
