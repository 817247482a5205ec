"""Greedy binary decision trees and bagged random forests."""
from __future__ import annotations

import math

import numpy as np


def _impurity(pos, n, criterion):
    """Node impurity from positive counts ``pos`` out of ``n`` (arrays)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, pos / np.maximum(n, 1), 0.0)
        if criterion == "gini":
            return 2.0 * p * (1.0 - p)
        q = 1.0 - p
        h = -(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0.0)
              + np.where(q > 0, q * np.log2(np.where(q > 0, q, 1)), 0.0))
        return h


def _n_features(max_features, d):
    if max_features is None:
        return d
    if max_features in ("sqrt", "auto"):
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d)))
    if isinstance(max_features, float):
        return max(1, int(max_features * d))
    return max(1, min(int(max_features), d))


class DecisionTree:
    """CART-style binary tree with gini or entropy splits.

    Leaves predict the majority label; equal counts resolve to label 0.
    """

    family = "DecisionTree"

    def __init__(
        self,
        criterion="gini",
        splitter="best",
        max_depth=None,
        min_samples_split=2,
        min_samples_leaf=1,
        max_features=None,
        random_state=0,
    ):
        if criterion not in ("gini", "entropy"):
            raise ValueError(f"unknown criterion {criterion!r}")
        if splitter not in ("best", "random"):
            raise ValueError(f"unknown splitter {splitter!r}")
        self.criterion = criterion
        self.splitter = splitter
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state
        self.nodes = None

    def get_params(self):
        return {
            "criterion": self.criterion,
            "splitter": self.splitter,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "random_state": self.random_state,
        }

    def _split_best(self, X, y, feats):
        msl = self.min_samples_leaf
        Xs = X[:, feats]
        order = np.argsort(Xs, axis=0, kind="stable")
        vals = np.take_along_axis(Xs, order, axis=0)
        ys = y[order]
        n = len(y)
        pos_left = np.cumsum(ys, axis=0)[:-1]
        n_left = np.arange(1, n)[:, None]
        total_pos = ys.sum(axis=0)
        pos_right = total_pos - pos_left
        n_right = n - n_left
        score = (n_left * _impurity(pos_left, n_left, self.criterion)
                 + n_right * _impurity(pos_right, n_right, self.criterion)) / n
        valid = (vals[1:] > vals[:-1]) & (n_left >= msl) & (n_right >= msl)
        score = np.where(valid, score, np.inf)
        # column-major argmin: first feature, then first position
        flat = int(np.argmin(score.T))
        j, i = divmod(flat, n - 1)
        if not np.isfinite(score[i, j]):
            return None
        thr = 0.5 * (vals[i, j] + vals[i + 1, j])
        if thr >= vals[i + 1, j]:
            thr = vals[i, j]
        return feats[j], float(thr), float(score[i, j])

    def _split_random(self, X, y, feats, rng):
        best = None
        n = len(y)
        for f in feats:
            col = X[:, f]
            lo, hi = col.min(), col.max()
            if hi <= lo:
                continue
            thr = float(rng.uniform(lo, hi))
            left = col <= thr
            nl = int(left.sum())
            if nl < self.min_samples_leaf or n - nl < self.min_samples_leaf:
                continue
            pl = y[left].sum()
            pr = y.sum() - pl
            s = (nl * _impurity(pl, nl, self.criterion) + (n - nl) * _impurity(pr, n - nl, self.criterion)) / n
            if best is None or s < best[2]:
                best = (int(f), thr, float(s))
        return best

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        rng = np.random.default_rng(self.random_state)
        d = X.shape[1]
        k = _n_features(self.max_features, d)
        feature, threshold, left, right, counts = [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            pos = int(y[idx].sum())
            counts.append((len(idx) - pos, pos))
            return len(feature) - 1

        stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            n0, n1 = counts[node]
            if (
                n0 == 0 or n1 == 0
                or len(idx) < self.min_samples_split
                or len(idx) < 2 * self.min_samples_leaf
                or (self.max_depth is not None and depth >= self.max_depth)
            ):
                continue
            feats = np.arange(d) if k == d else np.sort(rng.choice(d, size=k, replace=False))
            Xn, yn = X[idx], y[idx]
            if self.splitter == "best":
                split = self._split_best(Xn, yn, feats)
            else:
                split = self._split_random(Xn, yn, feats, rng)
            if split is None:
                continue
            f, thr, _ = split
            mask = Xn[:, f] <= thr
            li, ri = idx[mask], idx[~mask]
            feature[node], threshold[node] = f, thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))
        self.nodes = {
            "feature": np.array(feature, dtype=int),
            "threshold": np.array(threshold, dtype=float),
            "left": np.array(left, dtype=int),
            "right": np.array(right, dtype=int),
            "counts": np.array(counts, dtype=float).reshape(-1, 2),
        }
        return self

    def _leaves(self, X):
        X = np.asarray(X, dtype=float)
        nd = self.nodes
        at = np.zeros(len(X), dtype=int)
        active = nd["feature"][at] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            cur = at[rows]
            go_left = X[rows, nd["feature"][cur]] <= nd["threshold"][cur]
            at[rows] = np.where(go_left, nd["left"][cur], nd["right"][cur])
            active = nd["feature"][at] >= 0
        return at

    def predict_proba(self, X):
        c = self.nodes["counts"][self._leaves(X)]
        return c[:, 1] / c.sum(axis=1)

    def predict(self, X):
        c = self.nodes["counts"][self._leaves(X)]
        return (c[:, 1] > c[:, 0]).astype(int)

    @property
    def depth(self):
        nd = self.nodes
        best = 0
        stack = [(0, 0)]
        while stack:
            i, dep = stack.pop()
            best = max(best, dep)
            if nd["feature"][i] >= 0:
                stack += [(nd["left"][i], dep + 1), (nd["right"][i], dep + 1)]
        return best

    def state(self):
        return {k: v.tolist() for k, v in self.nodes.items()}

    def load_state(self, s):
        self.nodes = {
            "feature": np.asarray(s["feature"], dtype=int),
            "threshold": np.asarray(s["threshold"], dtype=float),
            "left": np.asarray(s["left"], dtype=int),
            "right": np.asarray(s["right"], dtype=int),
            "counts": np.asarray(s["counts"], dtype=float).reshape(-1, 2),
        }


class RandomForest:
    """Bootstrap-aggregated trees with per-split feature subsampling."""

    family = "RandomForest"

    def __init__(
        self,
        n_estimators=100,
        criterion="gini",
        max_depth=None,
        min_samples_split=2,
        min_samples_leaf=1,
        max_features="sqrt",
        bootstrap=True,
        random_state=0,
    ):
        self.n_estimators = n_estimators
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.trees: list[DecisionTree] = []

    def get_params(self):
        return {
            "n_estimators": self.n_estimators,
            "criterion": self.criterion,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
            "random_state": self.random_state,
        }

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        rng = np.random.default_rng(self.random_state)
        self.trees = []
        n = len(y)
        for _ in range(self.n_estimators):
            idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            # keep both classes in every bag
            while self.bootstrap and len(np.unique(y[idx])) < 2:
                idx = rng.integers(0, n, n)
            tree = DecisionTree(
                criterion=self.criterion,
                max_depth=self.max_depth,
                min_samples_split=self.min_samples_split,
                min_samples_leaf=self.min_samples_leaf,
                max_features=self.max_features,
                random_state=int(rng.integers(2**31)),
            )
            self.trees.append(tree.fit(X[idx], y[idx]))
        return self

    def predict(self, X):
        votes = np.sum([t.predict(X) for t in self.trees], axis=0)
        return (2 * votes > len(self.trees)).astype(int)

    def state(self):
        return {"trees": [t.state() for t in self.trees]}

    def load_state(self, s):
        self.trees = []
        for ts in s["trees"]:
            t = DecisionTree(criterion=self.criterion)
            t.load_state(ts)
            self.trees.append(t)
