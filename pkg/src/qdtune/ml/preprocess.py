"""Row representations (raw / Fourier / features) and PCA fitted on training rows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REPRESENTATIONS = ("raw", "fourier", "raw+fourier", "features")


def fft_magnitude(pixels) -> np.ndarray:
    """|DFT| of a 1D or 2D block, DC moved to the centre, flattened row-major."""
    a = np.asarray(pixels, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("input must be finite")
    return np.abs(np.fft.fftshift(np.fft.fftn(a))).ravel()


@dataclass(frozen=True)
class PreprocessSpec:
    representation: str = "raw"
    pca: int | None = None

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.pca is not None and self.pca < 1:
            raise ValueError("pca component count must be >= 1")

    def to_dict(self):
        return {"representation": self.representation, "pca": self.pca}


def represent(rows: np.ndarray, representation: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Turn raw rows (flattened currents or feature vectors) into model inputs.

    ``shape`` is the per-row block shape used for the Fourier transform, e.g.
    (28, 28) for charge-diagram segments; 1D rows default to their own length.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if representation in ("raw", "features"):
        return rows
    shape = tuple(shape or (rows.shape[1],))
    if not np.all(np.isfinite(rows)):
        raise ValueError("input must be finite")
    axes = tuple(range(1, len(shape) + 1))
    blocks = rows.reshape((len(rows),) + shape)
    ft = np.abs(np.fft.fftshift(np.fft.fftn(blocks, axes=axes), axes=axes)).reshape(len(rows), -1)
    if representation == "fourier":
        return ft
    return np.hstack([rows, ft])


@dataclass
class PCA:
    """Top-k eigenvectors of the training covariance."""

    mean: np.ndarray
    components: np.ndarray  # (k, d), rows are unit eigenvectors
    explained_variance: np.ndarray
    n_train_rows: int

    def project(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components.T

    def reconstruct(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "n_train_rows": self.n_train_rows,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["mean"], dtype=float),
            np.asarray(d["components"], dtype=float),
            np.asarray(d["explained_variance"], dtype=float),
            int(d["n_train_rows"]),
        )


def pca_fit(X, k: int) -> PCA:
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k must lie in [1, {min(n, d)}], got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(n - 1, 1)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1][:k]
    comps = v[:, order].T
    # deterministic sign: largest-magnitude entry positive
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    comps = comps * flip[:, None]
    return PCA(mean, comps, np.clip(w[order], 0.0, None), n)


def pca_project(basis: PCA, X) -> np.ndarray:
    return basis.project(X)
