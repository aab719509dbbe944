from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._tree import Tree, grow_tree, presort
from .base import canonical_order, check_predict_data, check_training_data, clamp01


class GradientBoostedTreesRegressor(RegressorMixin, BaseEstimator):
    """Second-order boosting of regression trees under squared error.

    Each round fits a tree to gradients ``pred - y`` with unit hessians; leaf
    weights are ``-G / (H + reg_lambda)`` and the model output is
    ``base_score + learning_rate * sum(tree outputs)``.

    Rows are put into a canonical order before fitting, so the fitted model
    does not depend on the order of the training rows.
    """

    def __init__(self, n_estimators=100, learning_rate=0.3, max_depth=6, reg_lambda=1.0,
                 min_child_weight=1.0, base_score=None, clip=True):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.base_score = base_score
        self.clip = clip

    def fit(self, X, y, groups=None):
        X, y = check_training_data(X, y)
        perm = canonical_order(X, y)
        X, y = np.ascontiguousarray(X[perm]), y[perm]
        order = presort(X)
        if self.base_score is None:
            # mean taken relative to one sample so a constant target is reproduced exactly
            self.base_score_ = float(y[0] + np.mean(y - y[0]))
        else:
            self.base_score_ = float(self.base_score)
        pred = np.full(y.size, self.base_score_)
        hess = np.ones(y.size)
        self.trees_: list[Tree] = []
        for _ in range(self.n_estimators):
            tree = grow_tree(
                X, order, pred - y, hess,
                lam=self.reg_lambda, max_depth=self.max_depth,
                min_child_weight=self.min_child_weight,
            )
            self.trees_.append(tree)
            pred = pred + self.learning_rate * tree.predict(X)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_raw(self, X) -> np.ndarray:
        X = check_predict_data(self, X)
        pred = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            pred = pred + self.learning_rate * tree.predict(X)
        return pred

    def predict(self, X) -> np.ndarray:
        raw = self.predict_raw(X)
        return clamp01(raw) if self.clip else raw
