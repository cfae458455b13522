"""Omics datasets: loading, preprocessing, stratified splits, synthetic data."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

BLOCK_KINDS = ("continuous", "binary")
DEFAULT_THRESHOLDS = {"continuous": 0.05, "binary": 0.0}


class DataError(ValueError):
    """Malformed input data; carries the offending location when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None,
                 column: str | None = None, block: str | None = None):
        self.path, self.line, self.column, self.block = path, line, column, block
        where = ", ".join(f"{k}={v}" for k, v in
                          (("block", block), ("file", path), ("line", line), ("column", column))
                          if v is not None)
        super().__init__(f"{message} ({where})" if where else message)


@dataclass
class OmicsBlock:
    name: str
    values: np.ndarray  # samples x features
    kind: str
    feature_names: list[str]
    variance_threshold: float | None = None

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise DataError(f"unknown block kind {self.kind!r}", block=self.name)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("block values must be a 2-D matrix", block=self.name)
        if len(self.feature_names) != self.values.shape[1]:
            raise DataError(f"{len(self.feature_names)} feature names for {self.values.shape[1]} columns",
                            block=self.name)
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite value in block", block=self.name)
        if self.kind == "binary":
            bad = np.argwhere((self.values != 0) & (self.values != 1))
            if len(bad):
                r, c = bad[0]
                raise DataError(f"non-binary value {self.values[r, c]!r} at row {r}",
                                block=self.name, column=self.feature_names[c])
        if self.variance_threshold is None:
            self.variance_threshold = DEFAULT_THRESHOLDS[self.kind]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass
class OmicsDataset:
    blocks: dict[str, OmicsBlock]
    labels: np.ndarray
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels).astype(np.int64)
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0/1")
        if not self.sample_ids:
            self.sample_ids = [f"s{i}" for i in range(len(self.labels))]
        if len(self.sample_ids) != len(self.labels):
            raise DataError("sample_ids and labels differ in length")
        for b in self.blocks.values():
            if b.values.shape[0] != len(self.labels):
                raise DataError(f"block has {b.values.shape[0]} rows for {len(self.labels)} labels", block=b.name)

    @property
    def omics_names(self) -> list[str]:
        return list(self.blocks)

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "OmicsDataset":
        idx = np.asarray(idx, dtype=np.int64)
        blocks = {k: replace(b, values=b.values[idx]) for k, b in self.blocks.items()}
        return OmicsDataset(blocks, self.labels[idx], [self.sample_ids[i] for i in idx])


# ---------------------------------------------------------------- loading

def _sniff_delimiter(path: Path, declared: str | None) -> str:
    if declared:
        return declared
    return "\t" if path.suffix.lower() in (".tsv", ".tab", ".txt") else ","


def _read_table(path: Path, delimiter: str, binary: bool, block: str) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise DataError("empty file", path=str(path), block=block)
    header = rows[0][1:]
    ids: list[str] = []
    values = np.empty((len(rows) - 1, len(header)))
    seen: set[str] = set()
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != len(header) + 1:
            raise DataError(f"expected {len(header) + 1} cells, got {len(row)}", path=str(path), line=line, block=block)
        sid = row[0]
        if sid in seen:
            raise DataError(f"duplicate sample id {sid!r}", path=str(path), line=line, block=block)
        seen.add(sid)
        ids.append(sid)
        for j, cell in enumerate(row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"unparseable number {cell!r}", path=str(path), line=line,
                                column=header[j], block=block) from None
            if not np.isfinite(v):
                raise DataError(f"non-finite value {cell!r}", path=str(path), line=line, column=header[j], block=block)
            if binary and v not in (0.0, 1.0):
                raise DataError(f"non-binary value {cell!r} in binary block", path=str(path), line=line,
                                column=header[j], block=block)
            values[i, j] = v
    return ids, header, values


def _read_labels(path: Path, delimiter: str) -> dict[str, int]:
    labels: dict[str, int] = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    for i, row in enumerate(rows):
        if len(row) != 2:
            raise DataError(f"labels file needs 2 columns, got {len(row)}", path=str(path), line=i + 1)
        sid, raw = row[0], row[1].strip()
        if i == 0 and raw not in ("0", "1", "0.0", "1.0"):
            continue  # header row
        if raw not in ("0", "1", "0.0", "1.0"):
            raise DataError(f"label {raw!r} is not 0/1", path=str(path), line=i + 1)
        if sid in labels:
            raise DataError(f"duplicate sample id {sid!r}", path=str(path), line=i + 1)
        labels[sid] = int(float(raw))
    return labels


def load_dataset(manifest_path) -> OmicsDataset:
    """Load a dataset described by a JSON manifest.

    Manifest layout::

        {"labels": "labels.csv",
         "blocks": [{"name": "expression", "path": "expr.csv", "kind": "continuous",
                     "variance_threshold": 0.05}, ...]}

    Paths are resolved relative to the manifest. Samples absent from any file
    are dropped; the row order follows the labels file.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"manifest is not valid JSON: {e}", path=str(manifest_path)) from None
    root = manifest_path.parent
    if "labels" not in manifest or not manifest.get("blocks"):
        raise DataError("manifest needs 'labels' and a non-empty 'blocks' list", path=str(manifest_path))
    lpath = root / manifest["labels"]
    labels = _read_labels(lpath, _sniff_delimiter(lpath, manifest.get("delimiter")))

    raw = []
    for spec in manifest["blocks"]:
        kind = spec.get("kind", "continuous")
        if kind not in BLOCK_KINDS:
            raise DataError(f"unknown block kind {kind!r}", path=str(manifest_path), block=spec.get("name"))
        path = root / spec["path"]
        ids, header, values = _read_table(path, _sniff_delimiter(path, spec.get("delimiter", manifest.get("delimiter"))),
                                          kind == "binary", spec["name"])
        raw.append((spec, ids, header, values))

    common = set(labels)
    for _, ids, _, _ in raw:
        common &= set(ids)
    order = [sid for sid in labels if sid in common]
    total = len(set(labels).union(*(set(ids) for _, ids, _, _ in raw)))
    dropped = total - len(order)
    if dropped:
        log.warning("dropped %d samples not present in every file", dropped)
    if not order:
        raise DataError("no sample is present in every file", path=str(manifest_path))

    blocks = {}
    for spec, ids, header, values in raw:
        pos = {sid: i for i, sid in enumerate(ids)}
        rows = [pos[sid] for sid in order]
        blocks[spec["name"]] = OmicsBlock(spec["name"], values[rows], spec.get("kind", "continuous"), header,
                                          spec.get("variance_threshold"))
    return OmicsDataset(blocks, np.array([labels[s] for s in order]), order)


def write_dataset(data: OmicsDataset, out_dir, prefix: str = "") -> Path:
    """Write block files, a labels file and a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, b in data.blocks.items():
        fname = f"{prefix}{name}.csv"
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", *b.feature_names])
            fmt = (lambda v: str(int(v))) if b.kind == "binary" else repr
            for sid, row in zip(data.sample_ids, b.values):
                w.writerow([sid, *(fmt(float(v)) for v in row)])
        entries.append({"name": name, "path": fname, "kind": b.kind, "variance_threshold": b.variance_threshold})
    lname = f"{prefix}labels.csv"
    with open(out / lname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "response"])
        for sid, y in zip(data.sample_ids, data.labels):
            w.writerow([sid, int(y)])
    manifest = out / f"{prefix}manifest.json"
    manifest.write_text(json.dumps({"labels": lname, "blocks": entries}, indent=2) + "\n")
    return manifest


# ---------------------------------------------------------- preprocessing

def variance_filter(train_block: np.ndarray, threshold: float) -> np.ndarray:
    """Keep-mask of features whose population variance exceeds ``threshold``."""
    if threshold < 0:
        raise ValueError("variance threshold must be nonnegative")
    var = np.asarray(train_block, dtype=np.float64).var(axis=0)
    keep = var > threshold
    if not keep.any():
        raise DataError(f"threshold removes all features (variance threshold {threshold})")
    return keep


@dataclass
class BlockState:
    feature_names: list[str]  # raw names the mask refers to
    kind: str
    threshold: float
    keep: np.ndarray
    offset: np.ndarray | None = None
    scale: np.ndarray | None = None


@dataclass
class PreprocessState:
    """Frozen per-block masks and scaling statistics, fit on training rows."""

    blocks: dict[str, BlockState]
    scaling: str = "standard"

    def output_dims(self) -> list[int]:
        return [int(b.keep.sum()) for b in self.blocks.values()]


def fit_preprocessing(train: OmicsDataset, scaling: str = "standard") -> PreprocessState:
    """Fit masks and scalers.

    ``standard`` z-scores continuous features; ``minmax`` maps them into
    [0, 1] (needed where inputs double as BCE reconstruction targets).
    Binary blocks are only filtered.
    """
    if scaling not in ("standard", "minmax"):
        raise ValueError(f"unknown scaling {scaling!r}")
    states = {}
    for name, b in train.blocks.items():
        try:
            keep = variance_filter(b.values, b.variance_threshold)
        except DataError as e:
            raise DataError(str(e), block=name) from None
        st = BlockState(list(b.feature_names), b.kind, b.variance_threshold, keep)
        if b.kind == "continuous":
            kept = b.values[:, keep]
            if scaling == "standard":
                st.offset, st.scale = kept.mean(axis=0), kept.std(axis=0)
            else:
                lo, hi = kept.min(axis=0), kept.max(axis=0)
                st.offset, st.scale = lo, hi - lo
        states[name] = st
    return PreprocessState(states, scaling)


def _aligned_values(st: BlockState, block: OmicsBlock, name: str) -> np.ndarray:
    if block.feature_names == st.feature_names:
        return block.values
    have, want = set(block.feature_names), set(st.feature_names)
    if have != want:
        missing = sorted(want - have)
        extra = sorted(have - want)
        raise DataError(f"feature mismatch: missing {missing[:10]}{'...' if len(missing) > 10 else ''}, "
                        f"extra {extra[:10]}{'...' if len(extra) > 10 else ''}", block=name)
    pos = {f: i for i, f in enumerate(block.feature_names)}
    return block.values[:, [pos[f] for f in st.feature_names]]


def apply_preprocessing(state: PreprocessState, data: OmicsDataset) -> list[np.ndarray]:
    """Transform ``data`` into the model's input matrices (block order of the state)."""
    if list(data.blocks) != list(state.blocks):
        missing = [k for k in state.blocks if k not in data.blocks]
        extra = [k for k in data.blocks if k not in state.blocks]
        if missing or extra:
            raise DataError(f"omics blocks differ from training: missing {missing}, extra {extra}")
    out = []
    for name, st in state.blocks.items():
        x = _aligned_values(st, data.blocks[name], name)[:, st.keep]
        if st.offset is not None:
            x = (x - st.offset) / st.scale
            if state.scaling == "minmax":
                x = np.clip(x, 0.0, 1.0)
        out.append(x)
    return out


# ---------------------------------------------------------------- splitting

def stratified_kfold(labels, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Partition sample indices into ``k`` stratified folds.

    Each class is shuffled and dealt out in near-equal chunks. The folds that
    receive a class's remainder rotate between classes so fold sizes stay
    balanced too.
    """
    y = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    folds: list[list[int]] = [[] for _ in range(k)]
    start = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise ValueError(f"class {cls} has {len(idx)} samples, fewer than k={k} folds")
        idx = rng.permutation(idx)
        base, extra = divmod(len(idx), k)
        sizes = np.full(k, base)
        for j in range(extra):
            sizes[(start + j) % k] += 1
        start = (start + extra) % k
        pos = 0
        for f in range(k):
            folds[f].extend(idx[pos:pos + sizes[f]].tolist())
            pos += sizes[f]
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


@dataclass
class FoldPlan:
    """Nested CV indices. ``outer[i] = (train_val, test)``; ``inner[i]`` holds
    ``(train, val)`` pairs expressed as indices into the full dataset."""

    outer: list[tuple[np.ndarray, np.ndarray]]
    inner: list[list[tuple[np.ndarray, np.ndarray]]]

    def check_no_leakage(self) -> None:
        for i, (train_val, test) in enumerate(self.outer):
            test_set = set(test.tolist())
            if test_set & set(train_val.tolist()):
                raise AssertionError(f"outer fold {i}: test overlaps train_val")
            covered: set[int] = set()
            for j, (tr, va) in enumerate(self.inner[i]):
                if test_set & (set(tr.tolist()) | set(va.tolist())):
                    raise AssertionError(f"outer fold {i}, inner fold {j}: test index used for training/validation")
                if set(tr.tolist()) & set(va.tolist()):
                    raise AssertionError(f"outer fold {i}, inner fold {j}: train and val overlap")
                covered |= set(va.tolist())
            if covered != set(train_val.tolist()):
                raise AssertionError(f"outer fold {i}: inner validation folds do not partition train_val")


def _complement(folds: Sequence[np.ndarray], i: int) -> np.ndarray:
    return np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))


def make_fold_plan(labels, rng: np.random.Generator, outer_k: int = 5, inner_k: int = 5) -> FoldPlan:
    y = np.asarray(labels)
    outer_folds = stratified_kfold(y, outer_k, rng)
    outer, inner = [], []
    for i, test in enumerate(outer_folds):
        train_val = _complement(outer_folds, i)
        sub = stratified_kfold(y[train_val], inner_k, rng)
        inner.append([(train_val[_complement(sub, j)], train_val[sub[j]]) for j in range(inner_k)])
        outer.append((train_val, test))
    return FoldPlan(outer, inner)


# ---------------------------------------------------------------- synthetic

@dataclass
class SyntheticSpec:
    n_samples: int = 200
    n_features: tuple[int, int, int] = (100, 100, 100)
    class_balance: float = 0.5
    signal_strength: float = 2.0
    signal_fraction: float = 0.2


def generate_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> OmicsDataset:
    """Three blocks: ``expression`` (continuous), ``mutation`` and ``cna`` (binary).

    A planted ``signal_fraction`` of each block's features is shifted by class:
    continuous features by ``+-signal_strength / 2`` standard deviations,
    binary features by moving the success probability away from 0.5. With
    ``signal_strength == 0`` every feature is independent of the label.
    """
    n = spec.n_samples
    n_pos = int(round(spec.class_balance * n))
    if n_pos < 2 or n - n_pos < 2:
        raise ValueError("need at least two samples per class")
    y = np.zeros(n, dtype=np.int64)
    y[rng.permutation(n)[:n_pos]] = 1
    sign = 2.0 * y - 1.0
    blocks = {}
    for name, kind, p in zip(("expression", "mutation", "cna"), ("continuous", "binary", "binary"),
                             spec.n_features):
        n_sig = max(1, int(round(spec.signal_fraction * p)))
        if kind == "continuous":
            x = rng.standard_normal((n, p))
            x[:, :n_sig] += 0.5 * spec.signal_strength * sign[:, None]
        else:
            base = rng.uniform(0.1, 0.5, size=p)
            prob = np.broadcast_to(base, (n, p)).copy()
            shift = 0.45 * np.tanh(spec.signal_strength / 2.0)
            prob[:, :n_sig] = 0.5 + shift * sign[:, None]
            x = (rng.random((n, p)) < prob).astype(np.float64)
        blocks[name] = OmicsBlock(name, x, kind, [f"{name}_{j}" for j in range(p)])
    return OmicsDataset(blocks, y, [f"sample_{i:04d}" for i in range(n)])
