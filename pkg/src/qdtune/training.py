"""Per-task model defaults, training with evaluation reports, and the family benchmark."""
from __future__ import annotations

import json
import os
import time

from .datasets import to_dataset
from .ml.evaluation import evaluate_redraws
from .ml.models import FAMILIES, Classifier, train
from .ml.preprocess import PreprocessSpec

TASKS = ("pinchoff", "single_dot", "double_dot", "regime")
SEGMENT_TASKS = TASKS[1:]

# Desk-scale epoch budget for the perceptrons; exposed through the run config.
MLP_EPOCHS = 200

# Selected family, hyperparameters and input representation per task.
# lbfgs solvers become adam and l1 penalties become l2 (not implemented here).
TASK_DEFAULTS = {
    "pinchoff": {
        "family": "DecisionTree",
        "params": {"criterion": "gini", "max_features": "sqrt", "min_samples_leaf": 2,
                   "min_samples_split": 6, "splitter": "random", "random_state": 0},
        "preprocess": {"representation": "features", "pca": None},
        "redraws": 20,
    },
    "single_dot": {
        "family": "MLP",
        "params": {"activation": "relu", "alpha": 0.1, "batch_size": 300, "hidden_layer_sizes": [100],
                   "learning_rate": "adaptive", "solver": "sgd", "power_t": 0.6,
                   "learning_rate_init": 0.01, "max_iter": MLP_EPOCHS, "random_state": 0},
        "preprocess": {"representation": "raw+fourier", "pca": 40},
        "redraws": 10,
    },
    "double_dot": {
        "family": "MLP",
        "params": {"activation": "logistic", "alpha": 0.001, "batch_size": 200, "hidden_layer_sizes": [200],
                   "learning_rate": "invscaling", "solver": "adam", "power_t": 0.6,
                   "max_iter": MLP_EPOCHS, "random_state": 0},
        "preprocess": {"representation": "raw+fourier", "pca": 40},
        "redraws": 10,
    },
    "regime": {
        "family": "MLP",
        "params": {"activation": "relu", "alpha": 0.001, "batch_size": 200, "hidden_layer_sizes": [300],
                   "learning_rate": "constant", "solver": "sgd", "power_t": 0.4,
                   "learning_rate_init": 0.01, "max_iter": MLP_EPOCHS, "random_state": 0},
        "preprocess": {"representation": "raw+fourier", "pca": 40},
        "redraws": 10,
    },
}

# Baseline hyperparameters for the family comparison.
BENCH_PARAMS = {
    "DecisionTree": {"random_state": 0},
    "RandomForest": {"n_estimators": 50, "random_state": 0},
    "KNN": {"n_neighbors": 2, "weights": "distance", "p": 2},
    "LogisticRegression": {"C": 1.0, "max_iter": 500},
    "MLP": {"hidden_layer_sizes": [100], "max_iter": 100, "random_state": 0},
}


def task_setup(task: str, overrides: dict | None = None):
    """(family, params, PreprocessSpec, redraws) for a task, with config overrides applied."""
    if task not in TASK_DEFAULTS:
        raise ValueError(f"unknown task {task!r}")
    d = TASK_DEFAULTS[task]
    o = overrides or {}
    params = dict(d["params"])
    params.update(o.get("params", {}))
    if "mlp_epochs" in o and d["family"] == "MLP":
        params["max_iter"] = int(o["mlp_epochs"])
    pre = dict(d["preprocess"])
    pre.update(o.get("preprocess", {}))
    return o.get("family", d["family"]), params, PreprocessSpec(**pre), int(o.get("redraws", d["redraws"]))


def train_task(records, task: str, overrides=None, seed: int = 0, evaluate: bool = True):
    """Fit the selected model on all records and, optionally, its redraw report."""
    family, params, spec, redraws = task_setup(task, overrides)
    data = to_dataset(records, spec.representation)
    if min(sum(data.y == 0), sum(data.y == 1)) < 5:
        raise ValueError(f"{task} dataset too small: need at least 5 examples per class")
    report = evaluate_redraws(data, family, params, spec, redraws, seed) if evaluate else None
    model = train(data, family, params, spec)
    return model, report


def train_models(datasets: dict, out_dir=None, overrides: dict | None = None, seed: int = 0,
                 evaluate: bool = True) -> dict:
    """Train one model per task; write ``<task>.model.json`` and ``<task>.eval.json``."""
    overrides = overrides or {}
    models, reports = {}, {}
    for task in TASKS:
        if task not in datasets:
            raise ValueError(f"missing dataset for task {task!r}")
        model, report = train_task(datasets[task], task, overrides.get(task), seed, evaluate)
        models[task] = model
        reports[task] = report
        if out_dir is not None:
            model.save(os.path.join(out_dir, f"{task}.model.json"))
            if report is not None:
                with open(os.path.join(out_dir, f"{task}.eval.json"), "w") as fh:
                    json.dump({"task": task, "family": model.family, **report.to_dict()}, fh,
                              indent=2, sort_keys=True)
    return {"models": models, "reports": reports}


def load_models(model_dir) -> dict:
    return {t: Classifier.load(os.path.join(model_dir, f"{t}.model.json")) for t in TASKS}


def bench_rows(task: str):
    """(family, representation, pca) grid: families x representations x {no PCA, PCA}."""
    reps = ["raw", "fourier", "raw+fourier"] + (["features"] if task == "pinchoff" else [])
    return [(f, r, p) for f in FAMILIES for r in reps for p in (False, True)]


def bench_classifiers(records, task: str, n: int = 3, seed: int = 0, pca_components: int = 20,
                      params: dict | None = None, timing: bool = False) -> list[dict]:
    """Evaluate every family on every representation, with and without PCA.

    Timing columns (fit and per-example evaluation time) are wall-clock
    measurements and are only included when ``timing`` is set, so that
    reports stay reproducible by default.
    """
    params = params or BENCH_PARAMS
    rows = []
    cache = {}
    for family, rep, use_pca in bench_rows(task):
        if rep not in cache:
            cache[rep] = to_dataset(records, rep)
        data = cache[rep]
        k = None
        if use_pca:
            k = min(pca_components, data.X.shape[1] if rep != "raw+fourier" else 2 * data.X.shape[1])
        spec = PreprocessSpec(rep, k)
        t0 = time.perf_counter()
        r = evaluate_redraws(data, family, params.get(family, {}), spec, n, seed)
        row = {"task": task, "family": family, "representation": rep, "pca": k,
               "accuracy_mean": r.accuracy_mean, "accuracy_std": r.accuracy_std, "n": n}
        if timing:
            row["wall_time"] = time.perf_counter() - t0
            row["eval_time_mean"] = r.eval_time_mean
            row["eval_time_std"] = r.eval_time_std
        rows.append(row)
    return rows
