"""Nested cross-validation benchmark: random search on the fixed grid,
early-stopped inner folds, retraining and outer/external scoring."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .architectures import METHODS, ModelSpec, predict, train
from .data import FoldPlan, OmicsDataset, make_fold_plan
from .hyperparams import GRID, HyperParams, grid_size, sample_hyperparams  # noqa: F401  (re-exported)
from .metrics import auprc, auroc  # noqa: F401  (re-exported)
from .neural_core import make_rng

log = logging.getLogger(__name__)

SPLITS = ("test", "external")
HP_COLUMNS = tuple(f.name for f in HyperParams.__dataclass_fields__.values())
RESULT_COLUMNS = ("dataset", "method", "fold", "split", "auroc", "auprc", *HP_COLUMNS)
TIMING_COLUMNS = ("dataset", "method", "fold", "wall_time_seconds")


def derive_seed(master: int, *keys) -> np.random.SeedSequence:
    """Seed for one task, stable across processes and scheduling order."""
    digest = hashlib.sha256(repr(tuple(str(k) for k in keys)).encode()).digest()
    return np.random.SeedSequence([int(master), int.from_bytes(digest[:8], "little")])


class CandidatesFailed(RuntimeError):
    pass


@dataclass
class InnerSearch:
    best: int
    best_mean: float
    fold_scores: list[list[float]]  # per candidate, folds actually evaluated
    failed: list[int] = field(default_factory=list)

    @property
    def pruned(self) -> list[int]:
        k = max(len(s) for s in self.fold_scores) if self.fold_scores else 0
        return [i for i, s in enumerate(self.fold_scores) if 0 < len(s) < k and i not in self.failed]


def select_candidate(evaluate: Callable[[int, int], float], n_candidates: int, n_folds: int,
                     early_stop: bool = True) -> InnerSearch:
    """Pick the candidate with the highest mean validation AUROC.

    ``evaluate(candidate, fold)`` returns one validation AUROC. With
    ``early_stop`` a candidate is abandoned once even perfect scores on its
    remaining folds could not lift its mean above the best so far. Ties go to
    the earlier candidate, so pruning never changes the selection.
    """
    if n_candidates < 1:
        raise ValueError("need at least one candidate")
    best, best_mean = -1, -math.inf
    scores: list[list[float]] = []
    failed: list[int] = []
    for c in range(n_candidates):
        got: list[float] = []
        scores.append(got)
        try:
            for j in range(n_folds):
                got.append(float(evaluate(c, j)))
                if early_stop and j + 1 < n_folds and best >= 0:
                    # fsum is correctly rounded, so this bound never undercuts the final mean
                    bound = math.fsum(got + [1.0] * (n_folds - j - 1)) / n_folds
                    if bound <= best_mean:
                        break
        except (ArithmeticError, ValueError) as e:
            log.warning("candidate %d failed: %s", c, e)
            failed.append(c)
            continue
        if len(got) == n_folds:
            mean = math.fsum(got) / n_folds
            if mean > best_mean:
                best, best_mean = c, mean
    if best < 0:
        raise CandidatesFailed(f"all {n_candidates} hyperparameter candidates failed")
    return InnerSearch(best, best_mean, scores, failed)


def run_inner_cv(method: str, data: OmicsDataset, hp_list: Sequence[HyperParams], plan: FoldPlan,
                 outer_idx: int, master_seed: int = 0, key: Sequence = (), early_stop: bool = True
                 ) -> tuple[HyperParams, InnerSearch]:
    """Select hyperparameters for one outer fold on its inner folds."""
    inner = plan.inner[outer_idx]

    def evaluate(c: int, j: int) -> float:
        tr, va = inner[j]
        spec = ModelSpec.for_method(method, data.omics_names, hp_list[c])
        model = train(spec, data.subset(tr), make_rng(derive_seed(master_seed, *key, "inner", c, j)))
        return auroc(predict(model, data.subset(va)), data.labels[va])

    search = select_candidate(evaluate, len(hp_list), len(inner), early_stop)
    return hp_list[search.best], search


@dataclass
class ResultRow:
    auroc: float
    auprc: float
    hyperparams: HyperParams


@dataclass
class ResultMatrix:
    """Scores keyed by (dataset, method, outer fold, split)."""

    entries: dict[tuple[str, str, int, str], ResultRow] = field(default_factory=dict)
    wall_time: dict[tuple[str, str, int], float] = field(default_factory=dict)

    def add(self, dataset: str, method: str, fold: int, split: str, row: ResultRow) -> None:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        for name in ("auroc", "auprc"):
            v = getattr(row, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        self.entries[(dataset, method, int(fold), split)] = row

    def merge(self, other: "ResultMatrix") -> None:
        self.entries.update(other.entries)
        self.wall_time.update(other.wall_time)

    def datasets(self) -> list[str]:
        return sorted({k[0] for k in self.entries})

    def methods(self) -> list[str]:
        seen: dict[str, None] = {}
        for k in self.entries:
            seen.setdefault(k[1], None)
        return list(seen)

    def values(self, metric: str, split: str = "test") -> dict[tuple[str, str], list[float]]:
        out: dict[tuple[str, str], list[float]] = {}
        for (d, m, f, s), row in sorted(self.entries.items()):
            if s == split:
                out.setdefault((d, m), []).append(getattr(row, metric))
        return out

    def check_complete(self, n_folds: int = 5) -> None:
        for (d, m), vals in self.values("auroc", "test").items():
            if len(vals) != n_folds:
                raise ValueError(f"{d}/{m}: {len(vals)} outer-fold entries, expected {n_folds}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_COLUMNS)
            for (d, m, f, s), row in sorted(self.entries.items(), key=lambda kv: _sort_key(kv[0])):
                hp = row.hyperparams.to_dict()
                w.writerow([d, m, f, s, repr(row.auroc), repr(row.auprc), *(hp[c] for c in HP_COLUMNS)])

    def timings_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TIMING_COLUMNS)
            for (d, m, f), t in sorted(self.wall_time.items()):
                w.writerow([d, m, f, f"{t:.3f}"])

    @classmethod
    def from_csv(cls, path) -> "ResultMatrix":
        out = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"dataset", "method", "fold", "auroc", "auprc"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"results table {path} lacks columns {sorted(missing)}")
            for line, rec in enumerate(reader, start=2):
                try:
                    hp = HyperParams.from_dict({c: rec[c] for c in HP_COLUMNS if rec.get(c) not in (None, "")})
                    row = ResultRow(float(rec["auroc"]), float(rec["auprc"]), hp)
                    out.add(rec["dataset"], rec["method"], int(rec["fold"]), rec.get("split") or "test", row)
                    if rec.get("wall_time_seconds"):
                        out.wall_time[(rec["dataset"], rec["method"], int(rec["fold"]))] = float(rec["wall_time_seconds"])
                except (ValueError, KeyError) as e:
                    raise ValueError(f"{path}, line {line}: {e}") from None
        return out


def _sort_key(k):
    d, m, f, s = k
    method_rank = list(METHODS).index(m) if m in METHODS else len(METHODS)
    return (d, method_rank, m, f, SPLITS.index(s))


@dataclass
class BenchmarkConfig:
    seed: int = 0
    folds_outer: int = 5
    folds_inner: int = 5
    hp_draws: int = 200
    early_stop: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.folds_outer < 2 or self.folds_inner < 2:
            raise ValueError("fold counts must be at least 2")
        if self.hp_draws < 1:
            raise ValueError("hp_draws must be at least 1")


@dataclass
class BenchmarkDataset:
    name: str
    data: OmicsDataset
    external: OmicsDataset | None = None


@dataclass
class CellResult:
    dataset: str
    method: str
    fold: int
    rows: dict[str, ResultRow]
    wall_time: float
    search: InnerSearch | None = None
    error: str | None = None


def run_cell(ds: BenchmarkDataset, method: str, fold: int, plan: FoldPlan, config: BenchmarkConfig) -> CellResult:
    """Inner search, retrain on the whole outer training set, score test/external."""
    t0 = time.perf_counter()
    key = (ds.name, method, fold)
    try:
        hp_list = sample_hyperparams(make_rng(derive_seed(config.seed, *key, "hp")), config.hp_draws)
        best, search = run_inner_cv(method, ds.data, hp_list, plan, fold, config.seed, key, config.early_stop)
        train_val, test = plan.outer[fold]
        spec = ModelSpec.for_method(method, ds.data.omics_names, best)
        model = train(spec, ds.data.subset(train_val), make_rng(derive_seed(config.seed, *key, "final")))
        scores = predict(model, ds.data.subset(test))
        y = ds.data.labels[test]
        rows = {"test": ResultRow(auroc(scores, y), auprc(scores, y), best)}
        if ds.external is not None:
            ext = predict(model, ds.external)
            rows["external"] = ResultRow(auroc(ext, ds.external.labels), auprc(ext, ds.external.labels), best)
        err = None
    except Exception as e:  # one failing cell must not abort the others
        log.exception("cell %s/%s/fold %d failed", ds.name, method, fold)
        rows, search, err = {}, None, f"{type(e).__name__}: {e}"
    wall = time.perf_counter() - t0
    log.debug("cell %s/%s/fold %d done in %.1fs", ds.name, method, fold, wall)
    return CellResult(ds.name, method, fold, rows, wall, search, err)


def plan_for(ds: BenchmarkDataset, config: BenchmarkConfig) -> FoldPlan:
    plan = make_fold_plan(ds.data.labels, make_rng(derive_seed(config.seed, ds.name, "folds")),
                          config.folds_outer, config.folds_inner)
    plan.check_no_leakage()
    return plan


def run_benchmark(datasets: Iterable[BenchmarkDataset], methods: Sequence[str], config: BenchmarkConfig,
                  on_cell: Callable[[CellResult], None] | None = None) -> tuple[ResultMatrix, list[CellResult]]:
    """Run every (dataset, method, outer fold) cell.

    Returns the assembled results and the list of failed cells. Cells are
    independent and seeded from their keys, so the outcome does not depend on
    ``config.workers``.
    """
    if not methods:
        raise ValueError("method list is empty")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; valid methods: {', '.join(METHODS)}")
    datasets = list(datasets)
    tasks = []
    for ds in datasets:
        plan = plan_for(ds, config)
        for method in methods:
            for fold in range(config.folds_outer):
                tasks.append((ds, method, fold, plan))

    results = ResultMatrix()
    failures: list[CellResult] = []

    def collect(cell: CellResult) -> None:
        if cell.error:
            failures.append(cell)
        for split, row in cell.rows.items():
            results.add(cell.dataset, cell.method, cell.fold, split, row)
        results.wall_time[(cell.dataset, cell.method, cell.fold)] = cell.wall_time
        if on_cell is not None:
            on_cell(cell)

    if config.workers <= 1:
        for ds, method, fold, plan in tasks:
            collect(run_cell(ds, method, fold, plan, config))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(run_cell, ds, method, fold, plan, config) for ds, method, fold, plan in tasks]
            for fut in as_completed(futures):
                collect(fut.result())
    failures.sort(key=lambda c: (c.dataset, c.method, c.fold))
    return results, failures


def write_results(results: ResultMatrix, out_dir, stem: str = "results") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.csv"
    results.to_csv(path)
    results.timings_to_csv(out / "timings.csv")
    return path


__all__ = [
    "GRID", "HyperParams", "grid_size", "sample_hyperparams", "auroc", "auprc", "derive_seed",
    "select_candidate", "run_inner_cv", "InnerSearch", "CandidatesFailed", "ResultRow", "ResultMatrix",
    "BenchmarkConfig", "BenchmarkDataset", "CellResult", "run_cell", "run_benchmark", "plan_for", "write_results",
]
