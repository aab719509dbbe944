"""Per-participant normalisation, engineered features and design matrices."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import BaselineOverlapsBat, InsufficientData, NonFiniteInput
from .preprocess import SessionGrid
from .session import Phase

BASIC_COLUMNS = ("hr", "hrv_sdnn", "hrv_rmssd", "temp", "eda_tonic", "eda_phasic")
BASELINE_CHANNELS = ("hr", "eda_tonic", "eda_phasic")
STAT_CHANNELS = ("hr", "hrv_sdnn", "hrv_rmssd", "eda_tonic", "eda_phasic")
STATS = ("min", "max", "range", "mean", "std", "change")
WINDOWS = (1, 5, 10, 30)
CONTEXT_COLUMNS = ("is_bat", "is_walk", "is_vr")
MODES = ("basic", "features", "context")
RATIO_EPS = 1e-6


def minmax_normalize(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise NonFiniteInput("min-max scaling needs a non-empty finite series")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


@dataclass(frozen=True)
class BaselineStats:
    values: dict[str, float]
    window_s: float

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def compute_baseline(grid: SessionGrid, baseline_window: float = 60.0) -> BaselineStats:
    rel = grid.times - grid.t0
    sel = rel <= baseline_window + 1e-9
    if (grid.is_bat & sel).any():
        raise BaselineOverlapsBat(
            f"baseline window of {baseline_window} s overlaps a BAT phase in session {grid.participant_id}"
        )
    if rel[-1] < baseline_window - 1e-9:
        raise BaselineOverlapsBat(f"session {grid.participant_id} is shorter than the baseline window")
    values = {c: float(np.mean(grid[c][sel])) for c in BASIC_COLUMNS}
    return BaselineStats(values, float(baseline_window))


def baseline_features(x, baseline: float) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    return x - baseline, x / max(baseline, RATIO_EPS)


def window_stats(series, window: float, stat: str, rate: float = 4.0) -> np.ndarray:
    """Trailing-window statistic ending at each sample (shorter windows at the start)."""
    return _window_stats(np.asarray(series, dtype=float), window, rate, (stat,))[stat]


def _window_stats(x: np.ndarray, window: float, rate: float, stats: Sequence[str]) -> dict[str, np.ndarray]:
    w = max(1, int(round(window * rate)))
    n = x.size
    out = {s: np.empty(n) for s in stats}
    head = min(w - 1, n)
    for i in range(head):
        seg = x[: i + 1]
        for s in stats:
            out[s][i] = _stat(seg, s)
    if n >= w:
        view = sliding_window_view(x, w)
        for s in stats:
            out[s][w - 1 :] = _stat(view, s, axis=1)
    return out


def _stat(seg: np.ndarray, stat: str, axis=None):
    if stat == "min":
        return seg.min(axis=axis)
    if stat == "max":
        return seg.max(axis=axis)
    if stat == "range":
        return seg.max(axis=axis) - seg.min(axis=axis)
    if stat == "mean":
        return seg.mean(axis=axis)
    if stat == "std":
        # shifting by the first sample keeps constant windows at exactly zero
        return (seg - seg[..., :1]).std(axis=axis)
    if stat == "change":
        return seg[..., -1] - seg[..., 0]
    raise ValueError(f"unknown statistic {stat!r}")


def encode_context(phase) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    phases = [Phase(p) for p in np.asarray(phase).tolist()]
    is_bat = np.array([p.is_bat for p in phases], dtype=float)
    is_walk = np.array([p.is_walk for p in phases], dtype=float)
    is_vr = np.array([p.is_vr for p in phases], dtype=float)
    return is_bat, is_walk, is_vr


def pearson_r(x, y) -> tuple[float, bool]:
    """Two-pass Pearson correlation; zero variance gives ``(0.0, True)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(np.dot(xm, xm))
    syy = float(np.dot(ym, ym))
    if sxx == 0.0 or syy == 0.0:
        return 0.0, True
    r = float(np.dot(xm, ym)) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0)), False


# --- design matrices -------------------------------------------------------


def feature_columns(mode: str, window_s: float = 30) -> list[str]:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    cols = list(BASIC_COLUMNS)
    if mode in ("features", "context"):
        for c in BASELINE_CHANNELS:
            cols += [f"{c}_diff", f"{c}_ratio"]
        w = _wlabel(window_s)
        cols += [f"{c}_w{w}_{s}" for c in STAT_CHANNELS for s in STATS]
    if mode == "context":
        cols += list(CONTEXT_COLUMNS)
    return cols


def _wlabel(window_s: float) -> str:
    return str(int(window_s)) if float(window_s).is_integer() else str(window_s)


@dataclass(eq=False)
class FeatureMatrix:
    mode: str
    columns: list[str]
    rows: np.ndarray
    target: np.ndarray
    participant_id: np.ndarray
    t: np.ndarray
    phase: np.ndarray
    is_bat: np.ndarray

    def __post_init__(self):
        if self.rows.shape != (self.target.size, len(self.columns)):
            raise ValueError("row matrix shape does not match columns/target")
        if not np.all(np.isfinite(self.rows)) or not np.all(np.isfinite(self.target)):
            raise NonFiniteInput("feature matrix contains non-finite entries")

    def __len__(self) -> int:
        return self.target.size

    def subset(self, mask) -> "FeatureMatrix":
        return FeatureMatrix(
            self.mode, self.columns, self.rows[mask], self.target[mask],
            self.participant_id[mask], self.t[mask], self.phase[mask], self.is_bat[mask],
        )

    @classmethod
    def concat(cls, parts: Sequence["FeatureMatrix"]) -> "FeatureMatrix":
        first = parts[0]
        return cls(
            first.mode, first.columns,
            np.vstack([p.rows for p in parts]),
            np.concatenate([p.target for p in parts]),
            np.concatenate([p.participant_id for p in parts]),
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.phase for p in parts]),
            np.concatenate([p.is_bat for p in parts]),
        )


def _normalized_base(grid: SessionGrid) -> dict[str, np.ndarray]:
    return {c: minmax_normalize(grid[c]) for c in BASIC_COLUMNS}


def build_feature_matrix(
    grid: SessionGrid,
    baseline: BaselineStats,
    mode: str,
    window_s: float = 30,
) -> FeatureMatrix:
    """One participant's design matrix; every physiological column is min-max scaled."""
    names = feature_columns(mode, window_s)
    base = _normalized_base(grid)
    cols: dict[str, np.ndarray] = dict(base)
    if mode in ("features", "context"):
        for c in BASELINE_CHANNELS:
            diff, ratio = baseline_features(grid[c], baseline[c])
            cols[f"{c}_diff"] = minmax_normalize(diff)
            cols[f"{c}_ratio"] = minmax_normalize(ratio)
        w = _wlabel(window_s)
        for c in STAT_CHANNELS:
            stats = _window_stats(base[c], window_s, grid.rate, STATS)
            for s in STATS:
                cols[f"{c}_w{w}_{s}"] = minmax_normalize(stats[s])
    is_bat, is_walk, is_vr = encode_context(grid.phase)
    if mode == "context":
        cols.update(is_bat=is_bat, is_walk=is_walk, is_vr=is_vr)
    rows = np.column_stack([cols[n] for n in names])
    n = len(grid)
    return FeatureMatrix(
        mode, names, rows, minmax_normalize(grid["anxiety"]),
        np.full(n, grid.participant_id, dtype=object).astype(str), grid.times,
        np.asarray(grid.phase).astype(str), is_bat.astype(bool),
    )


class SessionFeaturizer(TransformerMixin, BaseEstimator):
    """Turns a list of :class:`SessionGrid` into one pooled :class:`FeatureMatrix`.

    Stateless: every statistic is computed within a participant, so ``fit``
    learns nothing and test participants never see training data.
    """

    def __init__(self, mode: str = "context", baseline_window_s: float = 60.0, window_s: float = 30):
        self.mode = mode
        self.baseline_window_s = baseline_window_s
        self.window_s = window_s

    def fit(self, grids, y=None):
        feature_columns(self.mode, self.window_s)
        return self

    def transform(self, grids) -> FeatureMatrix:
        parts = [
            build_feature_matrix(g, compute_baseline(g, self.baseline_window_s), self.mode, self.window_s)
            for g in grids
        ]
        return FeatureMatrix.concat(parts)


def write_feature_csv(fm: FeatureMatrix, path: str | Path) -> None:
    header = ["participant_id", "t", "phase", "is_bat", "target"] + list(fm.columns)
    lines = [",".join(header)]
    for i in range(len(fm)):
        cells = [fm.participant_id[i], repr(float(fm.t[i])), fm.phase[i], str(int(fm.is_bat[i])),
                 repr(float(fm.target[i]))]
        cells += [repr(float(v)) for v in fm.rows[i]]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- correlation report ----------------------------------------------------


@dataclass(frozen=True)
class CorrelationRow:
    feature: str
    window_s: float | None
    stat: str
    r: float
    zero_variance: bool


def _candidate_features(grid: SessionGrid, baseline: BaselineStats):
    """Yield ``(feature, window_s, stat, normalized values)`` for every candidate."""
    base = _normalized_base(grid)
    for c in BASIC_COLUMNS:
        yield c, None, "value", base[c]
    for c in BASELINE_CHANNELS:
        diff, ratio = baseline_features(grid[c], baseline[c])
        yield c, None, "diff", minmax_normalize(diff)
        yield c, None, "ratio", minmax_normalize(ratio)
    for c in BASIC_COLUMNS:
        for w in WINDOWS:
            stats = _window_stats(base[c], w, grid.rate, STATS)
            for s in STATS:
                yield c, w, s, minmax_normalize(stats[s])
    for name, flag in zip(CONTEXT_COLUMNS, encode_context(grid.phase)):
        yield name, None, "value", flag


def correlation_report(grids: Sequence[SessionGrid], baseline_window: float = 60.0) -> list[CorrelationRow]:
    """Pearson r of each candidate feature with normalized anxiety, rows pooled across participants."""
    if len(grids) < 2:
        raise InsufficientData(f"correlation report needs at least 2 sessions, got {len(grids)}")
    keys: list[tuple] = []
    pooled: dict[tuple, list[np.ndarray]] = {}
    targets = []
    for g in grids:
        bl = compute_baseline(g, baseline_window)
        targets.append(minmax_normalize(g["anxiety"]))
        for feat, w, s, v in _candidate_features(g, bl):
            key = (feat, w, s)
            if key not in pooled:
                keys.append(key)
                pooled[key] = []
            pooled[key].append(v)
    y = np.concatenate(targets)
    rows = []
    for key in keys:
        r, zero = pearson_r(np.concatenate(pooled[key]), y)
        rows.append(CorrelationRow(key[0], key[1], key[2], r, zero))
    return rows


def write_correlation_csv(rows: Sequence[CorrelationRow], path: str | Path, header_note: str | None = None) -> None:
    lines = []
    if header_note:
        lines.append(f"# {header_note}")
    lines.append("feature,window_s,stat,r,zero_variance")
    for row in rows:
        w = "" if row.window_s is None else _wlabel(row.window_s)
        lines.append(f"{row.feature},{w},{row.stat},{row.r!r},{int(row.zero_variance)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
