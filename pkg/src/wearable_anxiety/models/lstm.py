"""Stacked LSTM regressor trained with backpropagation through time.

Architecture: LSTM(units[0]) -> LSTM(units[1]) -> Dense(dense_units, relu)
-> Dense(1). Only the last hidden state of the second recurrent layer feeds
the dense head. Gate blocks are ordered input, forget, candidate, output.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..errors import NonFiniteInput, SequenceTooShort
from .base import check_predict_data, check_training_data, clamp01


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _orthogonal(rng, rows, cols):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(n_features, units=(64, 32), dense_units=16, seed=0, forget_bias=1.0) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    fan = n_features
    for l, H in enumerate(units):
        params[f"Wx{l}"] = _glorot(rng, fan, 4 * H)
        params[f"Wh{l}"] = _orthogonal(rng, H, 4 * H)
        b = np.zeros(4 * H)
        b[H : 2 * H] = forget_bias
        params[f"b{l}"] = b
        fan = H
    params["Wd"] = _glorot(rng, fan, dense_units)
    params["bd"] = np.zeros(dense_units)
    params["Wo"] = _glorot(rng, dense_units, 1)
    params["bo"] = np.zeros(1)
    return params


def _layer_forward(inp, Wx, Wh, b):
    B, L, _ = inp.shape
    H = Wh.shape[0]
    zx = (inp.reshape(B * L, -1) @ Wx + b).reshape(B, L, 4 * H)
    hs = np.empty((B, L, H), dtype=inp.dtype)
    gates = np.empty((B, L, 4 * H), dtype=inp.dtype)
    cs = np.empty((B, L, H), dtype=inp.dtype)
    tcs = np.empty((B, L, H), dtype=inp.dtype)
    h = np.zeros((B, H), dtype=inp.dtype)
    c = np.zeros((B, H), dtype=inp.dtype)
    for t in range(L):
        z = zx[:, t] + h @ Wh
        a = gates[:, t]
        a[:, : 2 * H] = _sigmoid(z[:, : 2 * H])
        a[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        a[:, 3 * H :] = _sigmoid(z[:, 3 * H :])
        c = a[:, H : 2 * H] * c + a[:, :H] * a[:, 2 * H : 3 * H]
        tc = np.tanh(c)
        h = a[:, 3 * H :] * tc
        cs[:, t], tcs[:, t], hs[:, t] = c, tc, h
    return hs, (gates, cs, tcs)


def _layer_backward(inp, hs, cache, dh_seq, Wx, Wh, need_input_grad, last_only=False):
    """BPTT through one layer.

    ``dh_seq`` is the gradient on every hidden state, or with ``last_only``
    the ``(batch, units)`` gradient on the final hidden state alone.
    """
    gates, cs, tcs = cache
    B, L, H = hs.shape
    dZ = np.empty((B, L, 4 * H), dtype=hs.dtype)
    dh_next = np.zeros((B, H), dtype=hs.dtype)
    dc_next = np.zeros((B, H), dtype=hs.dtype)
    zeros = dh_next
    for t in range(L - 1, -1, -1):
        a = gates[:, t]
        i, f, g, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
        tc = tcs[:, t]
        c_prev = cs[:, t - 1] if t > 0 else zeros
        if last_only:
            dh = dh_seq + dh_next if t == L - 1 else dh_next
        else:
            dh = dh_seq[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dZ[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ Wh.T
    flat = dZ.reshape(B * L, 4 * H)
    h_prev = np.concatenate((np.zeros((B, 1, H), dtype=hs.dtype), hs[:, :-1]), axis=1)
    grads = {
        "Wx": inp.reshape(B * L, -1).T @ flat,
        "Wh": h_prev.reshape(B * L, H).T @ flat,
        "b": flat.sum(axis=0),
    }
    d_inp = (flat @ Wx.T).reshape(inp.shape) if need_input_grad else None
    return grads, d_inp


def forward(params: dict, X: np.ndarray, n_layers: int, keep_cache: bool = False):
    """Network output for sequences ``X`` of shape ``(batch, steps, features)``."""
    caches = []
    inp = X
    for l in range(n_layers):
        hs, cache = _layer_forward(inp, params[f"Wx{l}"], params[f"Wh{l}"], params[f"b{l}"])
        caches.append((inp, hs, cache))
        inp = hs
    last = inp[:, -1]
    a = last @ params["Wd"] + params["bd"]
    d = np.maximum(a, 0.0)
    out = (d @ params["Wo"] + params["bo"])[:, 0]
    if keep_cache:
        return out, (caches, last, a, d)
    return out


def loss_value(pred, y, loss="mse", delta=0.1) -> tuple[float, np.ndarray]:
    """Mean loss and its gradient with respect to ``pred``."""
    r = pred - y
    n = r.size
    if loss == "mse":
        return float(np.mean(r * r)), 2.0 * r / n
    if loss == "huber":
        small = np.abs(r) <= delta
        vals = np.where(small, 0.5 * r * r, delta * (np.abs(r) - 0.5 * delta))
        grad = np.where(small, r, delta * np.sign(r)) / n
        return float(np.mean(vals)), grad
    raise ValueError(f"unknown loss {loss!r}")


def loss_and_grads(params: dict, X, y, n_layers: int, loss="mse", delta=0.1):
    pred, (caches, last, a, d) = forward(params, X, n_layers, keep_cache=True)
    value, dy = loss_value(pred, y, loss, delta)
    grads = {
        "Wo": d.T @ dy[:, None],
        "bo": np.array([dy.sum()], dtype=X.dtype),
    }
    dd = dy[:, None] @ params["Wo"].T
    da = dd * (a > 0)
    grads["Wd"] = last.T @ da
    grads["bd"] = da.sum(axis=0)
    dh = da @ params["Wd"].T
    grad_h, last_only = dh, True
    for l in range(n_layers - 1, -1, -1):
        inp, hs, cache = caches[l]
        g, grad_h = _layer_backward(
            inp, hs, cache, grad_h, params[f"Wx{l}"], params[f"Wh{l}"], l > 0, last_only
        )
        last_only = False
        for k, v in g.items():
            grads[f"{k}{l}"] = v
    return value, grads


class LSTMRegressor(RegressorMixin, BaseEstimator):
    """Sequence regressor over trailing windows of ``seq_len`` rows.

    ``fit`` and ``predict`` take ``groups`` (one id per row) so that windows
    never straddle two participants; rows of a group must be chronological.
    Training windows end every ``train_stride`` rows (from a random offset
    redrawn each epoch) and are fully inside their group; prediction windows end at every row and are zero-padded at
    the start of each group.
    """

    def __init__(self, units=(64, 32), dense_units=16, seq_len=40, epochs=50, batch_size=32,
                 learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8, loss="mse",
                 huber_delta=0.1, train_stride=1, dtype="float64", clip=True, random_state=0):
        self.units = units
        self.dense_units = dense_units
        self.seq_len = seq_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.loss = loss
        self.huber_delta = huber_delta
        self.train_stride = train_stride
        self.dtype = dtype
        self.clip = clip
        self.random_state = random_state

    def _layout(self, groups, n):
        groups = np.zeros(n, dtype=int) if groups is None else np.asarray(groups)
        if groups.shape != (n,):
            raise ValueError("groups must have one entry per row")
        _, first = np.unique(groups, return_index=True)
        return [np.flatnonzero(groups == groups[i]) for i in np.sort(first)]

    def _padded(self, X, members):
        """Stack each group behind ``seq_len - 1`` zero rows; returns array and row positions."""
        L = self.seq_len
        p = X.shape[1]
        total = sum(m.size + L - 1 for m in members)
        Xp = np.zeros((total, p), dtype=self.dtype)
        pos = np.empty(X.shape[0], dtype=np.int64)
        at = 0
        for m in members:
            at += L - 1
            Xp[at : at + m.size] = X[m]
            pos[m] = np.arange(at, at + m.size)
            at += m.size
        return Xp, pos

    def _windows(self, Xp, ends):
        idx = ends[:, None] - np.arange(self.seq_len - 1, -1, -1)[None, :]
        return Xp[idx]

    def fit(self, X, y, groups=None):
        X, y = check_training_data(X, y)
        members = self._layout(groups, y.size)
        L = self.seq_len
        for m in members:
            if m.size < L:
                raise SequenceTooShort(f"a group has {m.size} rows, fewer than seq_len={L}")
        Xp, pos = self._padded(X, members)
        stride = max(int(self.train_stride), 1)
        n_layers = len(self.units)

        params = {k: v.astype(self.dtype) for k, v in
                  init_params(X.shape[1], self.units, self.dense_units, self.random_state).items()}
        m1 = {k: np.zeros_like(v) for k, v in params.items()}
        m2 = {k: np.zeros_like(v) for k, v in params.items()}
        rng = np.random.default_rng(np.random.SeedSequence([int(self.random_state), 1]))
        step = 0
        curve = []
        for _ in range(self.epochs):
            # a fresh offset per epoch lets sparse strides visit every window over time
            offset = int(rng.integers(stride))
            sel = np.concatenate([m[L - 1 + offset :: stride] for m in members])
            ends, targets = pos[sel], y[sel].astype(self.dtype)
            perm = rng.permutation(ends.size)
            total = 0.0
            for s in range(0, perm.size, self.batch_size):
                batch = perm[s : s + self.batch_size]
                value, grads = loss_and_grads(
                    params, self._windows(Xp, ends[batch]), targets[batch], n_layers,
                    self.loss, self.huber_delta,
                )
                total += value * batch.size
                step += 1
                c1 = 1.0 - self.beta1**step
                c2 = 1.0 - self.beta2**step
                for k, gk in grads.items():
                    m1[k] = self.beta1 * m1[k] + (1.0 - self.beta1) * gk
                    m2[k] = self.beta2 * m2[k] + (1.0 - self.beta2) * gk * gk
                    params[k] = params[k] - self.learning_rate * (m1[k] / c1) / (np.sqrt(m2[k] / c2) + self.epsilon)
            if not all(np.all(np.isfinite(v)) for v in params.values()):
                raise NonFiniteInput("network parameters diverged to non-finite values")
            curve.append(total / perm.size)
        self.params_ = params
        self.loss_curve_ = np.asarray(curve)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_raw(self, X, groups=None, chunk=2048) -> np.ndarray:
        X = check_predict_data(self, X)
        members = self._layout(groups, X.shape[0])
        Xp, pos = self._padded(X, members)
        out = np.empty(X.shape[0])
        n_layers = len(self.units)
        for s in range(0, X.shape[0], chunk):
            out[s : s + chunk] = forward(self.params_, self._windows(Xp, pos[s : s + chunk]), n_layers)
        return out

    def predict(self, X, groups=None) -> np.ndarray:
        raw = self.predict_raw(X, groups)
        return clamp01(raw) if self.clip else raw
