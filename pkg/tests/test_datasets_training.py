import json

import numpy as np
import pytest

from qdtune import datasets as ds
from qdtune.device import Regime
from qdtune.training import TASKS, bench_classifiers, load_models, task_setup, train_models


def test_pinchoff_corpus_size_and_balance():
    recs = ds.gen_records("pinchoff", 100, 7)
    assert len(recs) == 200
    assert sum(r["label"] for r in recs) == 100
    assert all(len(r["features"]) == 4 and len(r["trace"]) == ds.TRACE_LENGTH for r in recs)
    good = {r["variant"] for r in recs if r["label"] == 1}
    assert good == {"good"}


@pytest.mark.parametrize("kind", ["single_dot", "double_dot", "regime"])
def test_segment_labels_agree_with_oracle(quick_corpora, kind):
    # good tiles carry the target regime; degraded images keep the physics of a real dot
    dot = {"single": Regime.SINGLE_DOT.value, "double": Regime.DOUBLE_DOT.value}
    for r in quick_corpora[kind]:
        v = r["variant"]
        if v in dot:
            assert r["oracle"] == dot[v]
        elif v in ("intermediate", "open", "closed", "dim"):
            assert r["oracle"] == Regime.NO_DOT.value
        else:
            assert v in ("noisy", "smeared") and r["label"] == 0
        assert len(r["pixels"]) == 28 * 28
    want = {"single_dot": "single", "double_dot": "double", "regime": "double"}[kind]
    assert all((r["variant"] == want) == bool(r["label"]) for r in quick_corpora[kind])


def test_segment_example_reproduces_record(quick_corpora):
    for r in quick_corpora["double_dot"][:: 97]:
        pix, regime = ds.segment_example(r["seed"], r["variant"])
        np.testing.assert_array_equal(pix.ravel(), r["pixels"])
        assert regime.value == r["oracle"]


def test_corpus_files_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    ds.gen_dataset("single_dot", 10, 3, a)
    ds.gen_dataset("single_dot", 10, 3, b)
    assert a.read_bytes() == b.read_bytes()
    assert len(ds.read_jsonl(a)) == 20


def test_too_small_corpus_rejected():
    with pytest.raises(ValueError):
        ds.gen_records("pinchoff", 5, 0)
    with pytest.raises(ValueError):
        ds.gen_records("charge_sensor", 20, 0)


def test_pinchoff_representations():
    recs = ds.gen_records("pinchoff", 10, 1)
    assert ds.to_dataset(recs, "features").X.shape == (20, 4)
    assert ds.to_dataset(recs, "raw").X.shape == (20, ds.TRACE_LENGTH)


def test_task_overrides():
    fam, params, spec, n = task_setup("regime", {"mlp_epochs": 5, "preprocess": {"pca": 10}, "redraws": 3})
    assert fam == "MLP" and params["max_iter"] == 5 and spec.pca == 10 and n == 3
    with pytest.raises(ValueError):
        task_setup("sensor")


def test_train_models_writes_artifacts(tmp_path, quick_corpora):
    small = {t: quick_corpora[t][:40] + quick_corpora[t][-40:] for t in TASKS}
    over = {t: {"redraws": 2, "mlp_epochs": 5} for t in TASKS}
    out = train_models(small, tmp_path, over)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == sorted([f"{t}.model.json" for t in TASKS] + [f"{t}.eval.json" for t in TASKS])
    ev = json.loads((tmp_path / "regime.eval.json").read_text())
    assert ev["n"] == 2 and 0.0 <= ev["accuracy_mean"] <= 1.0
    back = load_models(tmp_path)
    X = ds.to_dataset(small["regime"], "raw").X
    np.testing.assert_array_equal(back["regime"].predict(X), out["models"]["regime"].predict(X))


def test_train_models_needs_every_task(quick_corpora):
    with pytest.raises(ValueError):
        train_models({"pinchoff": quick_corpora["pinchoff"]})


def test_pinchoff_bench(quick_corpora):
    rows = bench_classifiers(quick_corpora["pinchoff"], "pinchoff", n=2)
    assert len(rows) == 40
    assert all(0.0 <= r["accuracy_mean"] <= 1.0 for r in rows)
    assert all("wall_time" not in r for r in rows)
    ranked = sorted(rows, key=lambda r: -r["accuracy_mean"])
    tree_feats = [r for r in rows if r["family"] == "DecisionTree" and r["representation"] == "features"]
    assert max(r["accuracy_mean"] for r in tree_feats) >= ranked[1]["accuracy_mean"]
