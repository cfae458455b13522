import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omicsbench.data import (DataError, OmicsBlock, OmicsDataset, SyntheticSpec, apply_preprocessing,
                             fit_preprocessing, generate_synthetic, load_dataset, make_fold_plan, stratified_kfold,
                             variance_filter, write_dataset)
from omicsbench.neural_core import make_rng

from helpers import tiny_dataset


def _write(path, rows):
    path.write_text("\n".join(",".join(map(str, r)) for r in rows) + "\n")


def _manifest(tmp_path, n=100, missing=0, binary_value="1"):
    ids = [f"p{i}" for i in range(n)]
    _write(tmp_path / "labels.csv", [("sample_id", "response")] + [(s, i % 2) for i, s in enumerate(ids)])
    _write(tmp_path / "expr.csv", [("id", "g1", "g2")] + [(s, i * 0.1, -i) for i, s in enumerate(ids)])
    mut_ids = ids[missing:]
    _write(tmp_path / "mut.csv", [("id", "m1")] + [(s, i % 2) for i, s in enumerate(mut_ids)])
    rows = [("id", "c1", "c2")] + [(s, 1, (i // 2) % 2) for i, s in enumerate(ids)]
    rows[3] = (ids[2], binary_value, 0)
    _write(tmp_path / "cna.csv", rows)
    m = {"labels": "labels.csv", "blocks": [
        {"name": "expression", "path": "expr.csv", "kind": "continuous", "variance_threshold": 0.05},
        {"name": "mutation", "path": "mut.csv", "kind": "binary", "variance_threshold": 0.0},
        {"name": "cna", "path": "cna.csv", "kind": "binary"}]}
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    return tmp_path / "manifest.json"


def test_load_aligned(tmp_path):
    d = load_dataset(_manifest(tmp_path))
    assert d.omics_names == ["expression", "mutation", "cna"]
    assert d.n_samples == 100
    assert d.sample_ids[:3] == ["p0", "p1", "p2"]
    assert d.blocks["expression"].values[5].tolist() == [0.5, -5.0]
    assert d.blocks["cna"].variance_threshold == 0.0
    assert d.labels[:4].tolist() == [0, 1, 0, 1]


def test_load_drops_missing_samples(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        d = load_dataset(_manifest(tmp_path, missing=2))
    assert d.n_samples == 98
    assert "dropped 2" in caplog.text
    assert d.sample_ids[0] == "p2"
    # rows stay aligned: expression value for p2 is 0.2
    assert d.blocks["expression"].values[0, 0] == pytest.approx(0.2)


def test_load_non_binary_names_location(tmp_path):
    with pytest.raises(DataError) as e:
        load_dataset(_manifest(tmp_path, binary_value="0.5"))
    err = e.value
    assert err.block == "cna" and err.line == 4 and err.column == "c1"
    assert "0.5" in str(err)


def test_load_unparseable_and_duplicate(tmp_path):
    m = _manifest(tmp_path)
    text = (tmp_path / "expr.csv").read_text().replace("p3,0.30000000000000004", "p3,abc")
    (tmp_path / "expr.csv").write_text(text)
    with pytest.raises(DataError, match="unparseable") as e:
        load_dataset(m)
    assert e.value.line == 5
    m = _manifest(tmp_path)
    lines = (tmp_path / "mut.csv").read_text().splitlines()
    lines.append(lines[1])
    (tmp_path / "mut.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="duplicate sample id"):
        load_dataset(m)


def test_tsv_by_extension(tmp_path):
    d = tiny_dataset(12)
    m = write_dataset(d, tmp_path)
    spec = json.loads(m.read_text())
    for b in spec["blocks"]:
        p = tmp_path / b["path"]
        new = p.with_suffix(".tsv")
        new.write_text(p.read_text().replace(",", "\t"))
        b["path"] = new.name
    m.write_text(json.dumps(spec))
    back = load_dataset(m)
    assert np.array_equal(back.blocks["mutation"].values, d.blocks["mutation"].values)


def test_write_load_roundtrip(tmp_path):
    d = generate_synthetic(SyntheticSpec(n_samples=30, n_features=(5, 4, 3)), make_rng(1))
    back = load_dataset(write_dataset(d, tmp_path))
    assert back.sample_ids == d.sample_ids
    assert np.array_equal(back.labels, d.labels)
    for name in d.omics_names:
        assert np.array_equal(back.blocks[name].values, d.blocks[name].values)


def test_block_validation():
    with pytest.raises(DataError, match="non-binary"):
        OmicsBlock("m", np.array([[0.0, 2.0]]), "binary", ["a", "b"])
    with pytest.raises(DataError):
        OmicsBlock("m", np.zeros((2, 2)), "weird", ["a", "b"])
    with pytest.raises(DataError):
        OmicsDataset({"m": OmicsBlock("m", np.zeros((3, 1)), "binary", ["a"])}, np.array([0, 1]))


def test_variance_filter_examples():
    x = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    assert variance_filter(x, 0.0).tolist() == [False, True, True]
    assert variance_filter(x[:, 1:], 0.2).tolist() == [True, False]  # (0,0,0,1) has variance 0.1875
    with pytest.raises(DataError, match="threshold removes all features"):
        variance_filter(x[:, :1], 0.0)


def test_standardisation_on_training_rows():
    d = tiny_dataset(40, seed=3)
    tr = d.subset(np.arange(30))
    st_ = fit_preprocessing(tr)
    xs = apply_preprocessing(st_, tr)
    assert np.allclose(xs[0].mean(axis=0), 0, atol=1e-9)
    assert np.allclose(xs[0].var(axis=0), 1, atol=1e-9)
    # held-out rows use the training statistics only
    te = d.subset(np.arange(30, 40))
    raw = te.blocks["expression"].values[:, st_.blocks["expression"].keep]
    assert np.allclose(apply_preprocessing(st_, te)[0],
                       (raw - st_.blocks["expression"].offset) / st_.blocks["expression"].scale)


def test_held_out_values_never_consulted():
    d = tiny_dataset(40, seed=4)
    tr_idx, te_idx = np.arange(30), np.arange(30, 40)
    a = fit_preprocessing(d.subset(tr_idx))
    poisoned = d.subset(np.arange(40))
    poisoned.blocks["expression"].values[te_idx] = 1e6
    b = fit_preprocessing(poisoned.subset(tr_idx))
    assert np.array_equal(a.blocks["expression"].offset, b.blocks["expression"].offset)


def test_filter_then_standardise_commutes():
    d = tiny_dataset(40, seed=5)
    d.blocks["expression"].values[:, 3] = 0.01 * d.blocks["expression"].values[:, 3]
    st_ = fit_preprocessing(d)
    keep = st_.blocks["expression"].keep
    assert not keep[3]
    kept = d.blocks["expression"].values[:, keep]
    direct = (kept - kept.mean(axis=0)) / kept.std(axis=0)
    assert np.allclose(apply_preprocessing(st_, d)[0], direct, atol=1e-12)


def test_apply_twice_is_identical_and_minmax_range():
    d = tiny_dataset(40, seed=6)
    st_ = fit_preprocessing(d, "minmax")
    a, b = apply_preprocessing(st_, d), apply_preprocessing(st_, d)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert a[0].min() == 0.0 and a[0].max() == 1.0


def test_feature_mismatch_lists_missing_and_extra():
    d = tiny_dataset(20)
    st_ = fit_preprocessing(d)
    other = tiny_dataset(20)
    other.blocks["cna"].feature_names = ["c0", "c1", "c2", "zz"]
    with pytest.raises(DataError, match=r"missing \['c3'\], extra \['zz'\]"):
        apply_preprocessing(st_, other)


def test_feature_reordering_is_aligned():
    d = tiny_dataset(20)
    st_ = fit_preprocessing(d)
    b = d.blocks["expression"]
    perm = [5, 4, 3, 2, 1, 0]
    shuffled = OmicsBlock(b.name, b.values[:, perm], b.kind, [b.feature_names[i] for i in perm])
    d2 = OmicsDataset({**d.blocks, "expression": shuffled}, d.labels, d.sample_ids)
    assert np.array_equal(apply_preprocessing(st_, d)[0], apply_preprocessing(st_, d2)[0])


def test_kfold_table1_shape():
    y = np.zeros(856, dtype=int)
    y[:121] = 1
    folds = stratified_kfold(y, 5, make_rng(0))
    assert sorted(int(y[f].sum()) for f in folds) == [24, 24, 24, 24, 25]


def test_kfold_one_per_class():
    y = np.array([0, 1] * 5)
    for f in stratified_kfold(y, 5, make_rng(0)):
        assert sorted(y[f].tolist()) == [0, 1]


def test_kfold_small_class():
    with pytest.raises(ValueError, match="fewer than k"):
        stratified_kfold([0, 0, 0, 1, 1], 3, make_rng(0))


@settings(max_examples=100, deadline=None)
@given(st.integers(12, 200), st.floats(0.05, 0.95), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_kfold_partition_and_proportionality(n, frac, k, seed):
    y = np.zeros(n, dtype=int)
    y[: max(k, min(n - k, int(frac * n)))] = 1
    folds = stratified_kfold(y, k, make_rng(seed))
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(n))
    for cls in (0, 1):
        share = (y == cls).sum() / k
        for f in folds:
            assert abs((y[f] == cls).sum() - share) < 1
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    again = stratified_kfold(y, k, make_rng(seed))
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))


def test_fold_plan_shape_and_leakage():
    y = np.array([0] * 30 + [1] * 20)
    plan = make_fold_plan(y, make_rng(0))
    assert len(plan.outer) == 5 and all(len(i) == 5 for i in plan.inner)
    plan.check_no_leakage()
    plan.inner[0][0] = (np.concatenate([plan.inner[0][0][0], plan.outer[0][1][:1]]), plan.inner[0][0][1])
    with pytest.raises(AssertionError):
        plan.check_no_leakage()


def test_synthetic_examples():
    d = generate_synthetic(SyntheticSpec(n_samples=200, class_balance=0.1), make_rng(0))
    assert d.labels.sum() == 20
    assert [d.blocks[n].kind for n in d.omics_names] == ["continuous", "binary", "binary"]
    a = generate_synthetic(SyntheticSpec(n_samples=50), make_rng(3))
    b = generate_synthetic(SyntheticSpec(n_samples=50), make_rng(3))
    assert all(np.array_equal(a.blocks[n].values, b.blocks[n].values) for n in a.omics_names)
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSpec(n_samples=10, class_balance=0.05), make_rng(0))


def test_synthetic_null_has_no_signal():
    d = generate_synthetic(SyntheticSpec(n_samples=2000, signal_strength=0.0), make_rng(0))
    for name in d.omics_names:
        x = d.blocks[name].values
        diff = x[d.labels == 1].mean(axis=0) - x[d.labels == 0].mean(axis=0)
        se = np.sqrt(x.var(axis=0) * (1 / 1000 + 1 / 1000)) + 1e-12
        assert np.mean(np.abs(diff / se) > 3) < 0.02


def test_synthetic_signal_planted():
    d = generate_synthetic(SyntheticSpec(n_samples=400, signal_strength=2.0), make_rng(0))
    x = d.blocks["expression"].values
    diff = x[d.labels == 1].mean(axis=0) - x[d.labels == 0].mean(axis=0)
    assert np.all(np.abs(diff[:20] - 2.0) < 0.5)
    assert np.all(np.abs(diff[20:]) < 0.5)
