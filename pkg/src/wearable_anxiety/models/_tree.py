"""Exact greedy regression-tree growth on presorted features.

A single builder serves both ensembles. Each row carries a first-order term
``g`` and a weight ``h``; the split gain is::

    G_L^2 / (H_L + lam) + G_R^2 / (H_R + lam) - G^2 / (H + lam)

and a leaf holds ``-G / (H + lam)``. With ``lam = 0``, ``h`` = bootstrap
multiplicity and ``g = -h * (y - ref)``, the gain is exactly the reduction in
weighted squared error and the leaf is the weighted mean of ``y - ref``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat binary tree; ``left == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.left.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left == -1))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.left[i] != -1:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _predict(X, self.feature, self.threshold, self.left, self.right, self.value)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def shifted(self, offset: float) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right, self.value + offset)

    def to_node(self, i: int = 0) -> dict:
        if self.left[i] == -1:
            return {"leaf": float(self.value[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "left": self.to_node(int(self.left[i])),
            "right": self.to_node(int(self.right[i])),
        }

    @classmethod
    def from_node(cls, root: dict) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def visit(node):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "leaf" in node:
                value[i] = float(node["leaf"])
                return i
            feature[i] = int(node["feature"])
            threshold[i] = float(node["threshold"])
            left[i] = visit(node["left"])
            right[i] = visit(node["right"])
            return i

        visit(root)
        return cls(
            np.asarray(feature, dtype=np.int32),
            np.asarray(threshold, dtype=np.float64),
            np.asarray(left, dtype=np.int32),
            np.asarray(right, dtype=np.int32),
            np.asarray(value, dtype=np.float64),
        )


def presort(X: np.ndarray) -> np.ndarray:
    """``(p, n)`` row orders, each stable-sorted by one feature."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))


def subset_order(order: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    """Restrict a presort to ``rows`` (sorted ascending) and renumber to ``0..len(rows)-1``."""
    remap = np.full(n, -1, dtype=np.int32)
    remap[rows] = np.arange(rows.size, dtype=np.int32)
    mapped = remap[order]
    return np.ascontiguousarray(mapped[mapped >= 0].reshape(order.shape[0], rows.size))


def grow_tree(
    X: np.ndarray,
    order: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    lam: float = 0.0,
    max_depth: int | None = None,
    min_child_weight: float = 0.0,
    min_samples_leaf: int = 1,
    rel_tol: float = 1e-12,
) -> Tree:
    depth = -1 if max_depth is None else int(max_depth)
    arrays = _grow(
        np.ascontiguousarray(X, dtype=np.float64),
        order,
        np.ascontiguousarray(g, dtype=np.float64),
        np.ascontiguousarray(h, dtype=np.float64),
        float(lam), depth, float(min_child_weight), int(min_samples_leaf), float(rel_tol),
    )
    return Tree(*arrays)


@numba.njit(cache=True)
def _grow(X, order0, g, h, lam, max_depth, min_child_weight, min_samples_leaf, rel_tol):
    p, m = order0.shape
    order = order0.copy()
    # xs[f, k] mirrors X[order[f, k], f] so split scans read memory sequentially
    xs = np.empty((p, m), dtype=np.float64)
    for f in range(p):
        for k in range(m):
            xs[f, k] = X[order[f, k], f]
    buf = np.empty(m, dtype=np.int32)
    xbuf = np.empty(m, dtype=np.float64)
    left_flag = np.zeros(m, dtype=np.bool_)
    cap = max(2 * m - 1, 1)
    feat = np.full(cap, -1, dtype=np.int32)
    thr = np.zeros(cap, dtype=np.float64)
    lch = np.full(cap, -1, dtype=np.int32)
    rch = np.full(cap, -1, dtype=np.int32)
    val = np.zeros(cap, dtype=np.float64)

    # stack entries: node, start, end, depth
    stack = np.empty((cap, 4), dtype=np.int64)
    sp = 0
    stack[sp, 0] = 0
    stack[sp, 1] = 0
    stack[sp, 2] = m
    stack[sp, 3] = 0
    sp += 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        depth = stack[sp, 3]

        G = 0.0
        H = 0.0
        scale = 0.0
        for k in range(start, end):
            r = order[0, k]
            G += g[r]
            H += h[r]
            if h[r] > 0.0:
                scale += g[r] * g[r] / h[r]
        val[node] = -G / (H + lam)

        if end - start < 2 or (max_depth >= 0 and depth >= max_depth):
            continue

        parent = G * G / (H + lam)
        best_gain = rel_tol * scale
        best_f = -1
        best_thr = 0.0
        count = end - start
        for f in range(p):
            GL = 0.0
            HL = 0.0
            for k in range(start, end - 1):
                r = order[f, k]
                GL += g[r]
                HL += h[r]
                xv = xs[f, k]
                xn = xs[f, k + 1]
                if not xn > xv:
                    continue
                nl = k - start + 1
                if nl < min_samples_leaf or count - nl < min_samples_leaf:
                    continue
                HR = H - HL
                if HL < min_child_weight or HR < min_child_weight:
                    continue
                GR = G - GL
                gain = GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    mid = 0.5 * (xv + xn)
                    best_thr = mid if mid < xn else xv

        if best_f < 0:
            continue

        nl = 0
        for k in range(start, end):
            goes = xs[best_f, k] <= best_thr
            left_flag[order[best_f, k]] = goes
            if goes:
                nl += 1

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        thr[node] = best_thr
        lch[node] = left_id
        rch[node] = right_id

        # children at the depth cap are leaves and only need their row sets,
        # which feature 0's order provides
        children_final = max_depth >= 0 and depth + 1 >= max_depth
        for f in range(1 if children_final else p):
            li = start
            ri = start + nl
            for k in range(start, end):
                r = order[f, k]
                if left_flag[r]:
                    buf[li] = r
                    xbuf[li] = xs[f, k]
                    li += 1
                else:
                    buf[ri] = r
                    xbuf[ri] = xs[f, k]
                    ri += 1
            for k in range(start, end):
                order[f, k] = buf[k]
                xs[f, k] = xbuf[k]

        # right pushed first so the left subtree is numbered first
        stack[sp, 0] = right_id
        stack[sp, 1] = start + nl
        stack[sp, 2] = end
        stack[sp, 3] = depth + 1
        sp += 1
        stack[sp, 0] = left_id
        stack[sp, 1] = start
        stack[sp, 2] = start + nl
        stack[sp, 3] = depth + 1
        sp += 1

    return (feat[:n_nodes].copy(), thr[:n_nodes].copy(), lch[:n_nodes].copy(),
            rch[:n_nodes].copy(), val[:n_nodes].copy())


@numba.njit(cache=True)
def _apply(X, feat, thr, lch, rch):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int32)
    for i in range(n):
        node = 0
        while lch[node] != -1:
            if X[i, feat[node]] <= thr[node]:
                node = lch[node]
            else:
                node = rch[node]
        out[i] = node
    return out


@numba.njit(cache=True)
def _predict(X, feat, thr, lch, rch, val):
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        node = 0
        while lch[node] != -1:
            if X[i, feat[node]] <= thr[node]:
                node = lch[node]
            else:
                node = rch[node]
        out[i] = val[node]
    return out
