"""Binary classification stack: preprocessing, model families, evaluation."""
from .evaluation import (ConfusionMatrix, EvalReport, accuracy, balanced_split, confusion_matrix,
                         evaluate_redraws, expand_grid, grid_search, redraw_fluctuation_sweep)
from .models import FAMILIES, Classifier, Dataset, NotTrained, predict, train
from .preprocess import PCA, REPRESENTATIONS, PreprocessSpec, fft_magnitude, pca_fit, pca_project, represent

__all__ = [
    "ConfusionMatrix", "EvalReport", "accuracy", "balanced_split", "confusion_matrix",
    "evaluate_redraws", "expand_grid", "grid_search", "redraw_fluctuation_sweep",
    "FAMILIES", "Classifier", "Dataset", "NotTrained", "predict", "train",
    "PCA", "REPRESENTATIONS", "PreprocessSpec", "fft_magnitude", "pca_fit", "pca_project", "represent",
]
