"""k-nearest-neighbour vote with Minkowski distance."""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist


class KNN:
    family = "KNN"

    def __init__(self, n_neighbors=5, weights="uniform", p=2):
        if weights not in ("uniform", "distance"):
            raise ValueError(f"unknown weights {weights!r}")
        if p < 1:
            raise ValueError("Minkowski p must be >= 1")
        self.n_neighbors = n_neighbors
        self.weights = weights
        self.p = p
        self.X = None
        self.y = None

    def get_params(self):
        return {"n_neighbors": self.n_neighbors, "weights": self.weights, "p": self.p}

    def fit(self, X, y):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=int)
        return self

    def _distances(self, X):
        if self.p == 2:
            return cdist(X, self.X, "euclidean")
        if self.p == 1:
            return cdist(X, self.X, "cityblock")
        return cdist(X, self.X, "minkowski", p=self.p)

    def predict(self, X, chunk=512):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k = min(self.n_neighbors, len(self.y))
        out = np.empty(len(X), dtype=int)
        for s in range(0, len(X), chunk):
            d = self._distances(X[s:s + chunk])
            # stable sort: equidistant neighbours resolve by training order
            nn = np.argsort(d, axis=1, kind="stable")[:, :k]
            dn = np.take_along_axis(d, nn, axis=1)
            lab = self.y[nn]
            if self.weights == "uniform":
                w = np.ones_like(dn)
            else:
                exact = dn == 0
                w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / np.where(exact, 1.0, dn))
            v1 = (w * (lab == 1)).sum(axis=1)
            v0 = (w * (lab == 0)).sum(axis=1)
            out[s:s + chunk] = (v1 > v0).astype(int)
        return out

    def state(self):
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    def load_state(self, s):
        self.X = np.asarray(s["X"], dtype=float)
        self.y = np.asarray(s["y"], dtype=int)
