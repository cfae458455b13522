"""Independent oracles shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from omicsbench.architectures import (EarlyIntegrationNet, MOLINet, MOMANet, OmicsStackingNet, OmiEmbedNet,
                                      SuperFELTNet)
from omicsbench.data import OmicsBlock, OmicsDataset
from omicsbench.hyperparams import HyperParams
from omicsbench.neural_core import make_rng

FD_STEP = 1e-5
FD_RETRY_STEPS = (1e-6, 1e-7)
FD_RTOL = 1e-4
EPS = np.finfo(float).eps


def fd_tolerance(analytic: float, numeric: float, loss_scale: float, step: float = FD_STEP) -> float:
    """Relative tolerance plus the roundoff floor of a central difference.

    Evaluating a loss of magnitude ``L`` carries an absolute error of a few
    ulps of ``L``, which the central difference divides by ``2h``. Entries
    whose true gradient sits at that floor cannot be resolved to 1e-4
    relative, so the floor is added to the relative tolerance.
    """
    return FD_RTOL * max(abs(analytic), abs(numeric)) + 10.0 * EPS * max(loss_scale, 1.0) / step


def gradient_check(net, xs, y, seed: int, per_param: int = 25, rng_pick=None) -> list[str]:
    """Compare every phase's analytic gradient with central differences.

    Dropout masks and reparameterisation noise come from an rng re-seeded for
    every evaluation, so both sides see the same random function. Summed
    triplet hinges number in the thousands, so occasionally one switches
    inside [-h, h]; an entry that disagrees is retried with smaller steps,
    which move the stencil off such a kink. Returns a list of mismatch
    descriptions (empty when everything agrees).
    """
    rng_pick = rng_pick or make_rng(seed + 1)
    params = net.params()
    bad = []
    for phase in net.phases():
        loss0, grads = net.loss_and_grads(xs, y, make_rng(seed), phase.name)
        for name in phase.trainable:
            p = params[name].reshape(-1)
            g = grads[name].reshape(-1)
            pick = rng_pick.choice(p.size, min(p.size, per_param), replace=False)
            for i in pick:
                old = p[i]
                for h in (FD_STEP, *FD_RETRY_STEPS):
                    p[i] = old + h
                    lp, _ = net.loss_and_grads(xs, y, make_rng(seed), phase.name)
                    p[i] = old - h
                    lm, _ = net.loss_and_grads(xs, y, make_rng(seed), phase.name)
                    p[i] = old
                    num = (lp - lm) / (2 * h)
                    if abs(g[i] - num) <= fd_tolerance(g[i], num, abs(loss0), h):
                        break
                else:
                    bad.append(f"{type(net).__name__}/{phase.name}/{name}[{i}]: analytic {g[i]:.8g} numeric {num:.8g}")
    return bad


NETWORKS = {
    "early_integration": lambda d, hp, r: EarlyIntegrationNet(d, hp, r),
    "moli": lambda d, hp, r: MOLINet(d, hp, r),
    "super_felt": lambda d, hp, r: SuperFELTNet(d, hp, r),
    "omics_stacking": lambda d, hp, r: OmicsStackingNet(d, hp, r),
    "stacking_complete": lambda d, hp, r: OmicsStackingNet(d, hp, r, "stacking_complete"),
    "stacking_no_integration": lambda d, hp, r: OmicsStackingNet(d, hp, r, "stacking_no_integration"),
    "stacking_no_triplet": lambda d, hp, r: OmicsStackingNet(d, hp, r, "stacking_no_triplet"),
    "moma": lambda d, hp, r: MOMANet(d, hp, r),
    "omi_embed": lambda d, hp, r: OmiEmbedNet(d, hp, r),
}


def random_instance(method: str, seed: int):
    """A random small network plus batch (<= 50 samples, <= 20 features per block).

    Biases are randomised so no unit sits exactly on a relu kink, which would
    make the loss non-differentiable at the test point.
    """
    rng = make_rng(seed)
    n = int(rng.integers(10, 51))
    dims = [int(d) for d in rng.integers(3, 21, size=3)]
    y = np.zeros(n)
    y[rng.permutation(n)[: int(rng.integers(3, n - 2))]] = 1.0
    if method == "omi_embed":
        xs = [rng.random((n, d)) for d in dims]
    else:
        xs = [rng.standard_normal((n, d)) for d in dims]
    hp = HyperParams(layer_dim=int(rng.choice([4, 6, 8])), dropout_rate=float(rng.choice([0.1, 0.3, 0.5])),
                     gamma=float(rng.choice([0.1, 0.3, 0.5])), margin=float(rng.choice([0.2, 0.5, 1.0])),
                     module_count=int(rng.integers(2, 6)))
    net = NETWORKS[method](dims, hp, rng)
    for name, p in net.params().items():
        if name.endswith("bias"):
            p += rng.normal(0.0, 0.1, p.shape)
    return net, xs, y


def auroc_oracle(scores, labels) -> float:
    """All positive/negative pairs, ties counted half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    pos, neg = s[y], s[~y]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def auprc_oracle(scores, labels) -> float:
    """Enumerate distinct thresholds from high to low; sum precision times recall gain."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos = y.sum()
    total, prev_recall = 0.0, 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        sel = s >= t
        tp = float((sel & y).sum())
        precision = tp / sel.sum()
        recall = tp / n_pos
        total += precision * (recall - prev_recall)
        prev_recall = recall
    return total


def tiny_dataset(n: int = 40, seed: int = 0, dims=(6, 5, 4), signal: float = 3.0) -> OmicsDataset:
    """Small separable dataset with one continuous and two binary blocks."""
    rng = make_rng(seed)
    y = np.zeros(n, dtype=np.int64)
    y[rng.permutation(n)[: n // 2]] = 1
    s = 2.0 * y - 1.0
    expr = rng.standard_normal((n, dims[0]))
    expr[:, :2] += 0.5 * signal * s[:, None]
    blocks = {"expression": OmicsBlock("expression", expr, "continuous", [f"e{j}" for j in range(dims[0])])}
    for name, d in (("mutation", dims[1]), ("cna", dims[2])):
        p = np.full((n, d), 0.3)
        p[:, 0] = np.where(y == 1, 0.9, 0.1)
        x = (rng.random((n, d)) < p).astype(float)
        x[0, :] = 0.0
        x[1, :] = 1.0  # guarantee every binary column varies
        blocks[name] = OmicsBlock(name, x, "binary", [f"{name[0]}{j}" for j in range(d)])
    return OmicsDataset(blocks, y, [f"s{i:03d}" for i in range(n)])
