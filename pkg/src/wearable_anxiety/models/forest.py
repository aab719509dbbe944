from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._tree import Tree, grow_tree, presort, subset_order
from .base import check_predict_data, check_training_data, clamp01


def tree_seed(random_state: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(random_state), int(index)]))


class RandomForestRegressor(RegressorMixin, BaseEstimator):
    """Bagged variance-reduction trees; every feature is searched at every split.

    Tree ``k`` draws its bootstrap from a generator seeded with
    ``(random_state, k)``, so the forest does not depend on fitting order.

    Parameters
    ----------
    n_estimators : int
        Number of trees.
    max_depth : int or None
        ``None`` grows until leaves are pure or unsplittable.
    min_samples_leaf : int
        Minimum distinct training rows per leaf.
    bootstrap : bool
        Draw ``n`` rows with replacement per tree.
    clip : bool
        Clamp predictions to ``[0, 1]``.
    """

    def __init__(self, n_estimators=50, max_depth=None, min_samples_leaf=1, bootstrap=True,
                 clip=True, random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.clip = clip
        self.random_state = random_state

    def fit(self, X, y, groups=None):
        X, y = check_training_data(X, y)
        n = y.size
        order = presort(X)
        self.trees_: list[Tree] = []
        for k in range(self.n_estimators):
            if self.bootstrap:
                draws = tree_seed(self.random_state, k).integers(0, n, n)
                counts = np.bincount(draws, minlength=n).astype(np.float64)
            else:
                counts = np.ones(n)
            rows = np.flatnonzero(counts > 0)
            Xs, ys, hs = X[rows], y[rows], counts[rows]
            ref = float(ys.min())
            tree = grow_tree(
                Xs, subset_order(order, rows, n), -hs * (ys - ref), hs,
                lam=0.0, max_depth=self.max_depth, min_child_weight=0.0,
                min_samples_leaf=self.min_samples_leaf,
            )
            self.trees_.append(tree.shifted(ref))
        self.n_features_in_ = X.shape[1]
        return self

    def tree_predictions(self, X) -> np.ndarray:
        X = check_predict_data(self, X)
        return np.stack([t.predict(X) for t in self.trees_])

    def predict_raw(self, X) -> np.ndarray:
        return _mean_over_trees(self.tree_predictions(X))

    def predict(self, X) -> np.ndarray:
        raw = self.predict_raw(X)
        return clamp01(raw) if self.clip else raw


def _mean_over_trees(preds: np.ndarray) -> np.ndarray:
    """Arithmetic mean over axis 0, summed in tree order relative to the first tree.

    The offset keeps the mean of identical predictions bit-exact.
    """
    ref = preds[0]
    acc = np.zeros_like(ref)
    for p in preds:
        acc += p - ref
    return ref + acc / preds.shape[0]
