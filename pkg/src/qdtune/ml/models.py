"""Trained classifier = row representation + optional PCA + one model family."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linear import LogisticRegression
from .mlp import MLP
from .neighbors import KNN
from .preprocess import PCA, PreprocessSpec, pca_fit, represent
from .tree import DecisionTree, RandomForest

MODEL_SCHEMA_VERSION = 1

FAMILIES = {
    "DecisionTree": DecisionTree,
    "RandomForest": RandomForest,
    "KNN": KNN,
    "LogisticRegression": LogisticRegression,
    "MLP": MLP,
}


class NotTrained(RuntimeError):
    pass


@dataclass
class Dataset:
    """Rows of raw inputs (features or flattened currents) with binary labels."""

    X: np.ndarray
    y: np.ndarray
    class_names: tuple[str, str] = ("bad", "good")
    kind: str = "pinchoff"
    block_shape: tuple[int, ...] | None = None
    seeds: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=int)
        if len(self.X) != len(self.y):
            raise ValueError("X and y differ in length")
        if not set(np.unique(self.y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.class_names, self.kind, self.block_shape,
                       None if self.seeds is None else self.seeds[idx])


class Classifier:
    """Preprocessing fitted on training rows followed by a model family."""

    def __init__(self, family: str, params: dict | None = None, spec: PreprocessSpec | None = None,
                 block_shape: tuple[int, ...] | None = None):
        if family not in FAMILIES:
            raise ValueError(f"unknown model family {family!r}")
        self.family = family
        self.params = dict(params or {})
        self.spec = spec or PreprocessSpec()
        self.block_shape = tuple(block_shape) if block_shape else None
        self.model = FAMILIES[family](**self.params)
        self.pca: PCA | None = None
        self.n_inputs: int | None = None
        self.trained = False

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.n_inputs is not None and X.shape[1] != self.n_inputs:
            raise ValueError(f"expected rows of width {self.n_inputs}, got {X.shape[1]}")
        R = represent(X, self.spec.representation, self.block_shape)
        if self.pca is not None:
            R = self.pca.project(R)
        return R

    def fit(self, X, y) -> "Classifier":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=int)
        if len(np.unique(y)) < 2:
            raise ValueError("training data must contain both classes")
        if min(np.bincount(y, minlength=2)) < 2:
            raise ValueError("need at least two examples per class")
        self.n_inputs = X.shape[1]
        R = represent(X, self.spec.representation, self.block_shape)
        self.pca = None
        if self.spec.pca is not None:
            self.pca = pca_fit(R, min(self.spec.pca, *R.shape))
            R = self.pca.project(R)
        self.model.fit(R, y)
        self.trained = True
        return self

    def predict(self, X) -> np.ndarray:
        if not self.trained:
            raise NotTrained("predict called before training")
        return self.model.predict(self.transform(X))

    def predict_one(self, row) -> int:
        return int(self.predict(np.asarray(row, dtype=float)[None, :])[0])

    def to_dict(self) -> dict:
        if not self.trained:
            raise NotTrained("cannot serialize an untrained model")
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "family": self.family,
            "hyperparameters": self.params,
            "preprocess": self.spec.to_dict(),
            "block_shape": list(self.block_shape) if self.block_shape else None,
            "n_inputs": self.n_inputs,
            "pca": self.pca.to_dict() if self.pca is not None else None,
            "parameters": self.model.state(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Classifier":
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema {d.get('schema_version')!r}")
        c = cls(d["family"], d["hyperparameters"], PreprocessSpec(**d["preprocess"]), d.get("block_shape"))
        c.n_inputs = d["n_inputs"]
        c.pca = PCA.from_dict(d["pca"]) if d["pca"] is not None else None
        c.model.load_state(d["parameters"])
        c.trained = True
        return c

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Classifier":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def train(dataset: Dataset, family: str, params: dict | None = None,
          spec: PreprocessSpec | None = None) -> Classifier:
    return Classifier(family, params, spec, dataset.block_shape).fit(dataset.X, dataset.y)


def predict(model: Classifier, row) -> int:
    return model.predict_one(row)
