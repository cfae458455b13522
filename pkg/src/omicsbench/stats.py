"""Mean ranks, Friedman test, Nemenyi critical difference and CD diagrams."""

from __future__ import annotations

import math
from dataclasses import dataclass
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import chi2, f as f_dist, rankdata

# Two-tailed Nemenyi critical values q_0.05 (studentized range statistic for
# infinite degrees of freedom divided by sqrt(2)). k = 2..10 as tabulated by
# Demsar (JMLR 2006, Table 5a); k = 11..20 from the studentized range
# distribution, rounded to three decimals.
Q_ALPHA_005: dict[int, float] = {
    2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164,
    11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354, 15: 3.391, 16: 3.426, 17: 3.458, 18: 3.489,
    19: 3.517, 20: 3.544,
}


@dataclass
class RankTable:
    methods: list[str]
    datasets: list[str]
    ranks: np.ndarray  # datasets x methods, 1 = best, ties averaged

    @property
    def mean_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    @property
    def k(self) -> int:
        return len(self.methods)

    @property
    def n(self) -> int:
        return len(self.datasets)


@dataclass
class CDResult:
    k: int
    n: int
    alpha: float
    q_alpha: float
    cd: float


def compute_ranks(scores, methods: Sequence[str] | None = None, datasets: Sequence[str] | None = None,
                  higher_is_better: bool = True) -> RankTable:
    """Rank methods within each dataset row of a (datasets x methods) table."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("scores must be a datasets x methods matrix")
    methods = list(methods) if methods is not None else [f"m{j}" for j in range(s.shape[1])]
    datasets = list(datasets) if datasets is not None else [f"d{i}" for i in range(s.shape[0])]
    if len(methods) != s.shape[1] or len(datasets) != s.shape[0]:
        raise ValueError("method/dataset names do not match the score matrix shape")
    bad = np.argwhere(~np.isfinite(s))
    if len(bad):
        i, j = bad[0]
        raise ValueError(f"missing score for dataset {datasets[i]!r}, method {methods[j]!r}")
    ranks = np.vstack([rankdata(-row if higher_is_better else row) for row in s]) if len(s) else np.zeros((0, len(methods)))
    return RankTable(methods, datasets, ranks)


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> CDResult:
    """Critical difference ``q_alpha * sqrt(k (k + 1) / (6 n))``."""
    if alpha != 0.05:
        raise ValueError("only alpha = 0.05 is tabulated")
    if k not in Q_ALPHA_005:
        raise ValueError(f"k={k} outside the tabulated range 2..20")
    if n < 1:
        raise ValueError("need at least one dataset")
    q = Q_ALPHA_005[k]
    return CDResult(k, n, alpha, q, q * math.sqrt(k * (k + 1) / (6.0 * n)))


@dataclass
class FriedmanResult:
    chi2: float
    chi2_p: float
    f_stat: float
    f_p: float


def friedman_test(table: RankTable) -> FriedmanResult:
    """Friedman chi-square and the Iman-Davenport F correction, from ranks."""
    k, n = table.k, table.n
    r = table.mean_ranks
    stat = 12.0 * n / (k * (k + 1)) * (np.sum(r ** 2) - k * (k + 1) ** 2 / 4.0)
    p = float(chi2.sf(stat, k - 1))
    denom = n * (k - 1) - stat
    if n > 1 and denom > 0:
        f_stat = (n - 1) * stat / denom
        f_p = float(f_dist.sf(f_stat, k - 1, (k - 1) * (n - 1)))
    else:
        f_stat, f_p = math.inf, 0.0 if stat > 0 else 1.0
    return FriedmanResult(float(stat), p, float(f_stat), f_p)


def cd_groups(mean_ranks: Sequence[float], cd: float) -> list[tuple[int, int]]:
    """Maximal runs of methods (positions in ascending-rank order) whose
    spread of mean ranks is below ``cd``. Single methods are not reported."""
    r = np.sort(np.asarray(mean_ranks, dtype=np.float64))
    groups = []
    prev_end = -1
    for i in range(len(r)):
        j = i
        while j + 1 < len(r) and r[j + 1] - r[i] < cd:
            j += 1
        if j > i and j > prev_end:
            groups.append((i, j))
        prev_end = max(prev_end, j)
    return groups


def significant_pairs(table: RankTable, cd: CDResult) -> list[tuple[str, str, float]]:
    r = table.mean_ranks
    out = []
    for a in range(table.k):
        for b in range(a + 1, table.k):
            gap = abs(r[a] - r[b])
            if gap >= cd.cd:
                better, worse = (a, b) if r[a] < r[b] else (b, a)
                out.append((table.methods[better], table.methods[worse], float(gap)))
    return out


def summary_text(table: RankTable, cd: CDResult, title: str = "") -> str:
    lines = [title] if title else []
    order = np.argsort(table.mean_ranks, kind="mergesort")
    lines.append(f"datasets: {table.n}  methods: {table.k}")
    lines.append("mean ranks:")
    for j in order:
        lines.append(f"  {table.methods[j]:<28s} {table.mean_ranks[j]:.2f}")
    lines.append(f"Nemenyi critical difference (alpha={cd.alpha}, q={cd.q_alpha:.3f}): {cd.cd:.3f}")
    if table.k >= 2 and table.n >= 1:
        fr = friedman_test(table)
        line = f"Friedman chi2={fr.chi2:.3f} (p={fr.chi2_p:.4g})"
        if math.isfinite(fr.f_stat):
            line += f", Iman-Davenport F={fr.f_stat:.3f} (p={fr.f_p:.4g})"
        lines.append(line)
    pairs = significant_pairs(table, cd)
    if pairs:
        lines.append("significantly different pairs:")
        lines.extend(f"  {a} < {b} (gap {g:.2f})" for a, b, g in pairs)
    else:
        lines.append("no pair differs by at least the critical difference")
    return "\n".join(lines) + "\n"


def _f(v: float) -> str:
    return f"{v:.2f}"


def cd_diagram_svg(table: RankTable, cd: CDResult, title: str = "") -> str:
    """Critical-difference diagram as an SVG document.

    Rank axis 1..k on top, methods hanging off it (better half left, worse
    half right), a CD ruler, and thick bars joining groups that are not
    significantly different.
    """
    if table.k != cd.k:
        raise ValueError(f"rank table has {table.k} methods, CD computed for {cd.k}")
    k = table.k
    r = table.mean_ranks
    order = list(np.argsort(r, kind="mergesort"))
    width, margin, label_w = 640.0, 20.0, 150.0
    x0, x1 = margin + label_w, width - margin - label_w
    span = max(k - 1, 1)

    def x(rank: float) -> float:
        return x0 + (rank - 1.0) / span * (x1 - x0)

    top = 40.0 + (20.0 if title else 0.0)
    axis_y = top + 30.0
    groups = cd_groups(r, cd.cd)
    bars_y0 = axis_y + 14.0
    n_left = (k + 1) // 2
    label_y0 = bars_y0 + 10.0 * len(groups) + 18.0
    height = label_y0 + 18.0 * max(n_left, k - n_left) + margin

    el = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
          f'viewBox="0 0 {_f(width)} {_f(height)}" font-family="sans-serif" font-size="12">',
          f'<rect x="0" y="0" width="{_f(width)}" height="{_f(height)}" fill="white"/>']
    if title:
        el.append(f'<text x="{_f(width / 2)}" y="20.00" text-anchor="middle" font-size="14">{escape(title)}</text>')
    # CD ruler
    cd_len = cd.cd / span * (x1 - x0)
    el.append(f'<g class="cd-ruler"><line x1="{_f(x0)}" y1="{_f(top - 10)}" x2="{_f(x0 + cd_len)}" '
              f'y2="{_f(top - 10)}" stroke="black" stroke-width="1.5"/>'
              f'<line x1="{_f(x0)}" y1="{_f(top - 14)}" x2="{_f(x0)}" y2="{_f(top - 6)}" stroke="black"/>'
              f'<line x1="{_f(x0 + cd_len)}" y1="{_f(top - 14)}" x2="{_f(x0 + cd_len)}" y2="{_f(top - 6)}" stroke="black"/>'
              f'<text x="{_f(x0 + cd_len / 2)}" y="{_f(top - 16)}" text-anchor="middle">CD = {cd.cd:.3f}</text></g>')
    # axis
    el.append(f'<g class="axis"><line x1="{_f(x0)}" y1="{_f(axis_y)}" x2="{_f(x1)}" y2="{_f(axis_y)}" stroke="black"/>')
    for t in range(1, k + 1):
        el.append(f'<line x1="{_f(x(t))}" y1="{_f(axis_y - 5)}" x2="{_f(x(t))}" y2="{_f(axis_y)}" stroke="black"/>'
                  f'<text x="{_f(x(t))}" y="{_f(axis_y - 8)}" text-anchor="middle">{t}</text>')
    el.append("</g>")
    # method labels
    el.append('<g class="methods">')
    for pos, j in enumerate(order):
        xr = x(r[j])
        if pos < n_left:
            ly = label_y0 + 18.0 * pos
            lx, anchor, tx = margin + label_w - 10.0, "end", margin + label_w - 14.0
        else:
            ly = label_y0 + 18.0 * (k - 1 - pos)
            lx, anchor, tx = width - margin - label_w + 10.0, "start", width - margin - label_w + 14.0
        el.append(f'<g class="method" data-rank="{r[j]:.4f}">'
                  f'<polyline points="{_f(xr)},{_f(axis_y)} {_f(xr)},{_f(ly)} {_f(lx)},{_f(ly)}" '
                  f'fill="none" stroke="black"/>'
                  f'<text x="{_f(tx)}" y="{_f(ly + 4)}" text-anchor="{anchor}">'
                  f'{escape(table.methods[j])} ({r[j]:.2f})</text></g>')
    el.append("</g>")
    # non-significance bars
    el.append('<g class="cliques">')
    sorted_r = [r[j] for j in order]
    for g, (lo, hi) in enumerate(groups):
        y = bars_y0 + 10.0 * g
        el.append(f'<line class="clique" x1="{_f(x(sorted_r[lo]) - 3)}" y1="{_f(y)}" '
                  f'x2="{_f(x(sorted_r[hi]) + 3)}" y2="{_f(y)}" stroke="black" stroke-width="4"/>')
    el.append("</g>")
    el.append("</svg>")
    return "\n".join(el) + "\n"


def render_cd_diagram(table: RankTable, cd: CDResult, path, title: str = "") -> Path:
    path = Path(path)
    svg = cd_diagram_svg(table, cd, title)
    try:
        path.write_text(svg)
    except OSError as e:
        raise OSError(f"cannot write CD diagram to {path}: {e}") from e
    return path
