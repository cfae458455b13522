"""Command-line entry point: ``omicsbench run | report | synth``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .architectures import METHODS
from .data import OmicsDataset, SyntheticSpec, generate_synthetic, load_dataset, write_dataset
from .neural_core import make_rng
from .protocol import (HP_COLUMNS, SPLITS, BenchmarkConfig, BenchmarkDataset, CellResult, ResultMatrix,
                       run_benchmark, write_results)
from .stats import compute_ranks, nemenyi_cd, render_cd_diagram, summary_text, Q_ALPHA_005

log = logging.getLogger("omicsbench")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
ENV_SEED = "OMICSBENCH_SEED"
ENV_WORKERS = "OMICSBENCH_WORKERS"
METRICS = ("auroc", "auprc")
PARTIAL_MARKER = "PARTIAL"
SELECTED_COLUMNS = ("dataset", "method", "fold", *HP_COLUMNS, "inner_mean_auroc", "inner_trainings")


class ConfigError(ValueError):
    pass


@dataclass
class DatasetEntry:
    """One benchmark dataset: a manifest on disk or an inline synthetic spec."""

    name: str
    manifest: str | None = None
    external: str | None = None
    synthetic: dict | None = None

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ConfigError(f"dataset {self.name!r}: give exactly one of 'manifest' or 'synthetic'")


@dataclass
class RunConfig:
    datasets: list[DatasetEntry]
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    seed: int = 0
    folds_outer: int = 5
    folds_inner: int = 5
    hp_draws: int = 200
    early_stop: bool = True
    workers: int = 1
    out: str = "results"

    def validate(self) -> None:
        if not self.datasets:
            raise ConfigError("config lists no datasets")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate dataset names in {names}")
        if not self.methods:
            raise ConfigError("config lists no methods")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {', '.join(bad)}; valid methods: {', '.join(METHODS)}")
        if self.folds_outer < 2 or self.folds_inner < 2:
            raise ConfigError("fold counts must be at least 2")
        if self.hp_draws < 1:
            raise ConfigError("hp_draws must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["datasets"] = [{k: v for k, v in e.items() if v is not None} for e in d["datasets"]]
        return d

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}; known keys: {sorted(known)}")
        if "datasets" not in raw:
            raise ConfigError("config lacks 'datasets'")
        entries = []
        for i, d in enumerate(raw["datasets"]):
            if not isinstance(d, dict) or "name" not in d:
                raise ConfigError(f"datasets[{i}] must be an object with a 'name'")
            extra = sorted(set(d) - {"name", "manifest", "external", "synthetic"})
            if extra:
                raise ConfigError(f"datasets[{i}]: unknown keys {extra}")
            entry = DatasetEntry(**d)
            if base_dir is not None:
                # relative paths are relative to the config file; stored
                # absolute so a run manifest replays from anywhere
                for attr in ("manifest", "external"):
                    p = getattr(entry, attr)
                    if p is not None:
                        setattr(entry, attr, str((base_dir / p).resolve()))
            entries.append(entry)
        kw = {k: v for k, v in raw.items() if k != "datasets"}
        try:
            cfg = cls(datasets=entries, **kw)
            for name in ("seed", "folds_outer", "folds_inner", "hp_draws", "workers"):
                v = getattr(cfg, name)
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ConfigError(f"{name} must be an integer, got {v!r}")
            if not isinstance(cfg.early_stop, bool):
                raise ConfigError(f"early_stop must be true or false, got {cfg.early_stop!r}")
        except TypeError as e:
            raise ConfigError(str(e)) from None
        return cfg

    def benchmark_config(self) -> BenchmarkConfig:
        return BenchmarkConfig(seed=self.seed, folds_outer=self.folds_outer, folds_inner=self.folds_inner,
                               hp_draws=self.hp_draws, early_stop=self.early_stop, workers=self.workers)


def config_hash(cfg: RunConfig) -> str:
    """Hash of everything that affects results (not workers or the output path)."""
    d = cfg.to_dict()
    d.pop("workers")
    d.pop("out")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def load_config(path, args: argparse.Namespace | None = None, env=None) -> RunConfig:
    """Read a JSON config (or a run manifest holding one) and apply overrides.

    Precedence: command-line flags, then environment, then the file.
    """
    path = Path(path)
    env = os.environ if env is None else env
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}, line {e.lineno}, column {e.colno}: {e.msg}") from None
    base_dir = path.parent
    if isinstance(raw, dict) and "config" in raw and "config_sha256" in raw:
        raw = raw["config"]  # replaying from a run manifest; its paths are already absolute
    cfg = RunConfig.from_dict(raw, base_dir)
    for var, attr in ((ENV_SEED, "seed"), (ENV_WORKERS, "workers")):
        if env.get(var):
            try:
                setattr(cfg, attr, int(env[var]))
            except ValueError:
                raise ConfigError(f"environment variable {var}={env[var]!r} is not an integer") from None
    if args is not None:
        for attr in ("seed", "workers", "out", "hp_draws", "folds_outer", "folds_inner"):
            v = getattr(args, attr, None)
            if v is not None:
                setattr(cfg, attr, v)
        if getattr(args, "no_early_stop", False):
            cfg.early_stop = False
    cfg.validate()
    return cfg


def _synthetic_dataset(entry: DatasetEntry) -> OmicsDataset:
    opts = dict(entry.synthetic or {})
    seed = opts.pop("seed", 0)
    if "n_features" in opts:
        opts["n_features"] = tuple(opts["n_features"])
    try:
        spec = SyntheticSpec(**opts)
    except TypeError as e:
        raise ConfigError(f"dataset {entry.name!r}: bad synthetic spec: {e}") from None
    return generate_synthetic(spec, make_rng(seed))


def build_datasets(cfg: RunConfig) -> list[BenchmarkDataset]:
    out = []
    for entry in cfg.datasets:
        if entry.synthetic is not None:
            data = _synthetic_dataset(entry)
        else:
            data = load_dataset(entry.manifest)
        external = load_dataset(entry.external) if entry.external else None
        out.append(BenchmarkDataset(entry.name, data, external))
    return out


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_selected(cells: Sequence[CellResult], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SELECTED_COLUMNS)
        for c in sorted(cells, key=lambda c: (c.dataset, list(METHODS).index(c.method), c.fold)):
            if "test" not in c.rows or c.search is None:
                continue
            hp = c.rows["test"].hyperparams.to_dict()
            n_train = sum(len(s) for s in c.search.fold_scores)
            w.writerow([c.dataset, c.method, c.fold, *(hp[k] for k in HP_COLUMNS),
                        repr(c.search.best_mean), n_train])


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config, args)
        datasets = build_datasets(cfg)
    except (ValueError, OSError) as e:  # ConfigError, DataError, missing files, bad synthetic sizes
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"error: cannot create output directory {out}: {e}", file=sys.stderr)
        return EXIT_USAGE
    marker = out / PARTIAL_MARKER
    marker.unlink(missing_ok=True)

    bench = cfg.benchmark_config()
    n_cells = len(datasets) * len(cfg.methods) * cfg.folds_outer
    done: list[CellResult] = []
    t0 = time.perf_counter()
    checkpoint = ResultMatrix()

    def on_cell(cell: CellResult) -> None:
        # runs in the driver process only, so it is the single writer
        done.append(cell)
        for split, row in cell.rows.items():
            checkpoint.add(cell.dataset, cell.method, cell.fold, split, row)
        status = "failed: " + cell.error if cell.error else f"test AUROC {cell.rows['test'].auroc:.3f}"
        log.info("[%d/%d] %s/%s fold %d %s (%.1fs, elapsed %.0fs)", len(done), n_cells, cell.dataset,
                 cell.method, cell.fold, status, cell.wall_time, time.perf_counter() - t0)
        checkpoint.to_csv(out / "results.checkpoint.csv")

    manifest = {"version": __version__, "seed": cfg.seed, "config_sha256": config_hash(cfg),
                "config": cfg.to_dict()}
    interrupted = False
    try:
        results, failures = run_benchmark(datasets, cfg.methods, bench, on_cell)
    except KeyboardInterrupt:
        interrupted = True
        results, failures = checkpoint, [c for c in done if c.error]
    write_results(results, out)
    write_selected(done, out / "selected_hyperparams.csv")
    (out / "results.checkpoint.csv").unlink(missing_ok=True)

    complete = not interrupted and not failures
    manifest["status"] = "complete" if complete else "partial"
    manifest["failures"] = [{"dataset": c.dataset, "method": c.method, "fold": c.fold, "error": c.error}
                            for c in failures]
    _write_atomic(out / "run_manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if not complete:
        lines = [f"{len(done)} of {n_cells} cells finished" + (" (interrupted)" if interrupted else "")]
        lines += [f"{c.dataset}/{c.method}/fold {c.fold}: {c.error}" for c in failures]
        marker.write_text("\n".join(lines) + "\n")
        print("error: benchmark incomplete; see " + str(marker), file=sys.stderr)
        for line in lines:
            print("  " + line, file=sys.stderr)
        return EXIT_PARTIAL
    print(f"wrote {out / 'results.csv'} ({len(results.entries)} rows) in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


# ------------------------------------------------------------------ report

@dataclass
class SummaryTable:
    split: str
    metric: str
    datasets: list[str]
    methods: list[str]
    mean: np.ndarray  # datasets x methods, nan where missing
    std: np.ndarray


def summarize(results: ResultMatrix, split: str, metric: str) -> SummaryTable | None:
    vals = results.values(metric, split)
    if not vals:
        return None
    methods = [m for m in results.methods() if any(k[1] == m for k in vals)]
    order = {m: i for i, m in enumerate(METHODS)}
    methods.sort(key=lambda m: order.get(m, len(order)))
    datasets = sorted({d for d, _ in vals})
    mean = np.full((len(datasets), len(methods)), np.nan)
    std = np.full_like(mean, np.nan)
    for i, d in enumerate(datasets):
        for j, m in enumerate(methods):
            v = vals.get((d, m))
            if v:
                mean[i, j] = np.mean(v)
                std[i, j] = np.std(v)  # population std over the outer folds
    return SummaryTable(split, metric, datasets, methods, mean, std)


def table_markdown(t: SummaryTable, mean_ranks: np.ndarray | None) -> str:
    head = "| Dataset | " + " | ".join(t.methods) + " |"
    lines = [head, "|" + "---|" * (len(t.methods) + 1)]
    for i, d in enumerate(t.datasets):
        row = t.mean[i]
        best = np.nanmax(row) if np.isfinite(row).any() else np.nan
        cells = []
        for j in range(len(t.methods)):
            if not np.isfinite(row[j]):
                cells.append("-")
                continue
            s = f"{row[j]:.3f} ± {t.std[i, j]:.3f}"
            cells.append(f"**{s}**" if row[j] == best else s)
        lines.append(f"| {d} | " + " | ".join(cells) + " |")
    if mean_ranks is not None:
        lines.append("| Mean Rank | " + " | ".join(f"{r:.2f}" for r in mean_ranks) + " |")
    return "\n".join(lines) + "\n"


def table_csv(t: SummaryTable, mean_ranks: np.ndarray | None, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", *(f"{m}_{s}" for m in t.methods for s in ("mean", "std"))])
        for i, d in enumerate(t.datasets):
            w.writerow([d, *(f"{x:.6f}" for j in range(len(t.methods)) for x in (t.mean[i, j], t.std[i, j]))])
        if mean_ranks is not None:
            w.writerow(["mean_rank", *(x for r in mean_ranks for x in (f"{r:.4f}", ""))])


def cmd_report(args: argparse.Namespace) -> int:
    try:
        results = ResultMatrix.from_csv(args.results)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    methods = results.methods()
    if len(methods) < 2:
        print(f"error: need at least 2 methods to compare, found {len(methods)}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for split in SPLITS:
        for metric in METRICS:
            t = summarize(results, split, metric)
            if t is None:
                continue
            stem = f"{split}_{metric}"
            complete = np.isfinite(t.mean).all(axis=1)
            mean_ranks = None
            if len(t.methods) >= 2 and complete.any():
                ranks = compute_ranks(t.mean[complete], t.methods, [d for d, c in zip(t.datasets, complete) if c])
                mean_ranks = ranks.mean_ranks
                if ranks.k in Q_ALPHA_005:
                    cd = nemenyi_cd(ranks.k, ranks.n)
                    title = f"{metric.upper()} ({split})"
                    written.append(render_cd_diagram(ranks, cd, out / f"cd_{stem}.svg", title))
                    p = out / f"summary_{stem}.txt"
                    p.write_text(summary_text(ranks, cd, title))
                    written.append(p)
                else:
                    log.warning("%d methods: no tabulated critical value, skipping CD diagram", ranks.k)
            p = out / f"table_{stem}.md"
            p.write_text(table_markdown(t, mean_ranks))
            table_csv(t, mean_ranks, out / f"table_{stem}.csv")
            written += [p, out / f"table_{stem}.csv"]
    for p in written:
        print(p)
    return EXIT_OK


# ------------------------------------------------------------------- synth

def _int_list(s: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if len(vals) != 3 or min(vals) < 1:
        raise argparse.ArgumentTypeError("need three positive feature counts (expression, mutation, cna)")
    return vals


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(n_samples=args.samples, n_features=args.features, class_balance=args.balance,
                         signal_strength=args.signal, signal_fraction=args.signal_fraction)
    try:
        data = generate_synthetic(spec, make_rng(args.seed))
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        manifest = write_dataset(data, args.out, args.prefix)
    except OSError as e:
        print(f"error: cannot write to {args.out}: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(manifest)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omicsbench", description="Multi-omics drug response benchmark")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the nested cross-validation benchmark")
    r.add_argument("--config", required=True, help="JSON run config or a run_manifest.json to replay")
    r.add_argument("--seed", type=int, help=f"master seed (overrides ${ENV_SEED})")
    r.add_argument("--workers", type=int, help=f"parallel benchmark cells (overrides ${ENV_WORKERS})")
    r.add_argument("--out", help="output directory")
    r.add_argument("--no-early-stop", action="store_true", help="evaluate every inner fold of every draw")
    r.add_argument("--hp-draws", type=int, help="hyperparameter draws per outer fold")
    r.add_argument("--folds-outer", type=int)
    r.add_argument("--folds-inner", type=int)
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="tables, mean ranks and CD diagrams from a results table")
    rep.add_argument("results", help="results.csv written by 'run'")
    rep.add_argument("--out", default="report", help="output directory")
    rep.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write a synthetic 3-omics dataset")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--features", type=_int_list, default=(100, 100, 100), help="e.g. 100,100,100")
    s.add_argument("--balance", type=float, default=0.5, help="fraction of responders")
    s.add_argument("--signal", type=float, default=2.0, help="class separation; 0 gives pure noise")
    s.add_argument("--signal-fraction", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--prefix", default="", help="file name prefix")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
