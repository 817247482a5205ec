"""L2-penalized logistic regression trained by accelerated gradient descent."""
from __future__ import annotations

import numpy as np


class Standardizer:
    def __init__(self, mean=None, scale=None):
        self.mean = mean
        self.scale = scale

    def fit(self, X):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale = np.where(sd > 1e-12, sd, 1.0)
        return self

    def __call__(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def state(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_state(cls, s):
        return cls(np.asarray(s["mean"], dtype=float), np.asarray(s["scale"], dtype=float))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def class_weights(y, mode):
    if mode is None:
        return np.ones(len(y))
    if mode != "balanced":
        raise ValueError(f"unknown class_weight {mode!r}")
    n = len(y)
    counts = np.bincount(y, minlength=2).astype(float)
    return n / (2.0 * counts[y])


class LogisticRegression:
    """Binary logistic regression on standardized inputs.

    Minimizes mean (optionally class-weighted) log-loss plus ``|w|^2 / (2 C n)``
    with Nesterov-accelerated gradient steps of size 1/L. ``p > 0.5`` predicts
    label 1, so an exact tie goes to label 0.
    """

    family = "LogisticRegression"

    def __init__(self, C=1.0, penalty="l2", fit_intercept=True, max_iter=1000, tol=1e-6, class_weight=None):
        if penalty not in ("l2", "none"):
            raise ValueError(f"unsupported penalty {penalty!r}")
        self.C = C
        self.penalty = penalty
        self.fit_intercept = fit_intercept
        self.max_iter = max_iter
        self.tol = tol
        self.class_weight = class_weight
        self.coef = None
        self.intercept = 0.0
        self.scaler = None
        self.n_iter = 0

    def get_params(self):
        return {
            "C": self.C,
            "penalty": self.penalty,
            "fit_intercept": self.fit_intercept,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "class_weight": self.class_weight,
        }

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.scaler = Standardizer().fit(X)
        Z = self.scaler(X)
        n, d = Z.shape
        sw = class_weights(y, self.class_weight)
        sw = sw / sw.mean()
        reg = 0.0 if self.penalty == "none" else 1.0 / (self.C * n)
        # Lipschitz bound of the gradient
        lip = 0.25 * sw.max() * (np.linalg.norm(Z, 2) ** 2 / n + (1.0 if self.fit_intercept else 0.0)) + reg
        step = 1.0 / lip
        w = np.zeros(d)
        b = 0.0
        w_prev, b_prev = w.copy(), b
        for it in range(1, self.max_iter + 1):
            mom = (it - 1) / (it + 2)
            vw = w + mom * (w - w_prev)
            vb = b + mom * (b - b_prev)
            r = sw * (sigmoid(Z @ vw + vb) - y) / n
            gw = Z.T @ r + reg * vw
            gb = r.sum() if self.fit_intercept else 0.0
            w_prev, b_prev = w, b
            w = vw - step * gw
            b = vb - step * gb
            self.n_iter = it
            if max(np.max(np.abs(gw)), abs(gb)) < self.tol:
                break
        self.coef = w
        self.intercept = float(b)
        return self

    def decision_function(self, X):
        return self.scaler(X) @ self.coef + self.intercept

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(int)

    def state(self):
        return {"coef": self.coef.tolist(), "intercept": self.intercept, "scaler": self.scaler.state()}

    def load_state(self, s):
        self.coef = np.asarray(s["coef"], dtype=float)
        self.intercept = float(s["intercept"])
        self.scaler = Standardizer.from_state(s["scaler"])
