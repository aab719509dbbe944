from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

from ..errors import DimensionMismatch, EmptyDataset, NonFiniteInput


@dataclass(eq=False)
class Dataset:
    """Training rows; within each group the rows are in chronological order."""

    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray

    def __post_init__(self):
        self.X, self.y = check_training_data(self.X, self.y)
        self.groups = np.asarray(self.groups)
        if self.groups.shape != (self.y.size,):
            raise ValueError("groups must have one entry per row")

    def __len__(self) -> int:
        return self.y.size


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    if np.size(y) == 0 or np.shape(X)[0] == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("training data contains non-finite values")
    X = check_array(X, dtype=np.float64, order="C")
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.size}")
    return X, y


def check_predict_data(model, X) -> np.ndarray:
    check_is_fitted(model, "n_features_in_")
    X = check_array(X, dtype=np.float64, order="C")
    if X.shape[1] != model.n_features_in_:
        raise DimensionMismatch(f"model was trained on {model.n_features_in_} features, got {X.shape[1]}")
    return X


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row permutation that depends only on the multiset of ``(x, y)`` rows."""
    keys = tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1))
    return np.lexsort((y,) + keys)


def clamp01(pred: np.ndarray) -> np.ndarray:
    return np.clip(pred, 0.0, 1.0)
