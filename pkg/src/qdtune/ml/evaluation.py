"""Accuracy, confusion matrices and the balanced redraw protocol."""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, asdict
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .models import Classifier, Dataset
from .preprocess import PreprocessSpec

TRAIN_FRACTION = 0.8


class ConfusionMatrix(NamedTuple):
    tp: float
    fp: float
    fn: float
    tn: float

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def confusion_matrix(truth, predicted) -> ConfusionMatrix:
    """Counts with label 1 as the positive class."""
    t = np.asarray(truth, dtype=int)
    p = np.asarray(predicted, dtype=int)
    if t.shape != p.shape:
        raise ValueError("truth and predictions differ in length")
    if t.size == 0:
        raise ValueError("empty label vectors")
    return ConfusionMatrix(
        float(np.sum((p == 1) & (t == 1))),
        float(np.sum((p == 1) & (t == 0))),
        float(np.sum((p == 0) & (t == 1))),
        float(np.sum((p == 0) & (t == 0))),
    )


def accuracy(cm: Sequence[float]) -> float:
    """(TP + TN) / (P + N) for a (TP, FP, FN, TN) tuple."""
    tp, fp, fn, tn = cm
    total = tp + fp + fn + tn
    if total <= 0:
        raise ValueError("empty confusion matrix")
    return (tp + tn) / total


@dataclass
class EvalReport:
    accuracy_mean: float
    accuracy_std: float
    confusion: tuple[float, float, float, float]
    n: int
    train_fraction: float
    accuracies: list[float]
    eval_time_mean: float = 0.0
    eval_time_std: float = 0.0

    def to_dict(self, timing: bool = False):
        """Timing fields are wall-clock and left out unless asked for."""
        d = asdict(self)
        d["confusion"] = dict(zip(("tp", "fp", "fn", "tn"), self.confusion))
        if not timing:
            del d["eval_time_mean"], d["eval_time_std"]
        return d


def balanced_split(y, rng, train_fraction=TRAIN_FRACTION):
    """Equal-count subsample of both classes, shuffled and split train/test."""
    y = np.asarray(y, dtype=int)
    idx0 = np.nonzero(y == 0)[0]
    idx1 = np.nonzero(y == 1)[0]
    m = min(len(idx0), len(idx1))
    chosen = np.concatenate([rng.choice(idx0, m, replace=False), rng.choice(idx1, m, replace=False)])
    chosen = rng.permutation(chosen)
    n_train = int(round(train_fraction * len(chosen)))
    return chosen[:n_train], chosen[n_train:]


def _fit_score(data: Dataset, family, params, spec, tr, te):
    clf = Classifier(family, params, spec, data.block_shape).fit(data.X[tr], data.y[tr])
    t0 = time.perf_counter()
    pred = clf.predict(data.X[te])
    dt = time.perf_counter() - t0
    return confusion_matrix(data.y[te], pred), dt / max(len(te), 1)


def evaluate_redraws(data: Dataset, family: str, params: Mapping | None = None,
                     spec: PreprocessSpec | None = None, n: int = 20, seed: int = 0) -> EvalReport:
    """Mean/std accuracy over ``n`` balanced 80/20 redraws.

    Each redraw subsamples both classes to the smaller class size, fits the
    preprocessing and model on the training part only and scores the rest.
    """
    counts = np.bincount(data.y, minlength=2)
    if counts.min() < 5:
        raise ValueError("each class needs at least 5 examples")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    accs, cms, times = [], [], []
    for _ in range(n):
        tr, te = balanced_split(data.y, rng)
        cm, dt = _fit_score(data, family, dict(params or {}), spec, tr, te)
        accs.append(accuracy(cm))
        cms.append(cm)
        times.append(dt)
    return EvalReport(
        float(np.mean(accs)),
        float(np.std(accs)),
        tuple(float(x) for x in np.mean(np.array(cms), axis=0)),
        n,
        TRAIN_FRACTION,
        [float(a) for a in accs],
        float(np.mean(times)),
        float(np.std(times)),
    )


def expand_grid(grid: Mapping[str, Sequence]) -> list[dict]:
    """Cartesian product in key insertion order, last key varying fastest."""
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def grid_search(data: Dataset, family: str, grid: Mapping[str, Sequence],
                spec: PreprocessSpec | None = None, seed: int = 0):
    """Exhaustive search on one fixed balanced split; first best combination wins.

    Returns ``(best_params, best_accuracy, all_results)``.
    """
    combos = expand_grid(grid)
    if not combos:
        raise ValueError("empty grid")
    tr, te = balanced_split(data.y, np.random.default_rng(seed))
    results = []
    best = None
    for h in combos:
        cm, _ = _fit_score(data, family, h, spec, tr, te)
        acc = accuracy(cm)
        results.append((h, acc))
        if best is None or acc > best[1]:
            best = (h, acc)
    return best[0], best[1], results


@dataclass
class FluctuationPoint:
    n: int
    mean: float
    std: float
    spread_of_mean: float
    repeats: int


def redraw_fluctuation_sweep(data: Dataset, family: str, params: Mapping | None = None,
                             spec: PreprocessSpec | None = None, n_list=(2, 5, 10, 20),
                             seed: int = 0, repeats: int = 1) -> list[FluctuationPoint]:
    """Accuracy statistics as a function of the number of redraws.

    For each ``n`` the redraw evaluation is run ``repeats`` times with
    independent sub-seeds. ``mean``/``std`` are the first run's report (the
    within-run spread of per-redraw accuracies); ``spread_of_mean`` is the
    standard deviation of the reported mean across repeats, i.e. how much the
    quoted performance would move on re-evaluation.
    """
    ss = np.random.SeedSequence(seed)
    out = []
    for n, child in zip(n_list, ss.spawn(len(n_list))):
        seeds = [int(s.generate_state(1)[0]) for s in child.spawn(repeats)]
        reports = [evaluate_redraws(data, family, params, spec, n, s) for s in seeds]
        means = [r.accuracy_mean for r in reports]
        out.append(FluctuationPoint(int(n), reports[0].accuracy_mean, reports[0].accuracy_std,
                                    float(np.std(means)), repeats))
    return out


def moving_average(values, window=3):
    v = np.asarray(values, dtype=float)
    if len(v) < window:
        return v.copy()
    return np.convolve(v, np.ones(window) / window, mode="valid")
