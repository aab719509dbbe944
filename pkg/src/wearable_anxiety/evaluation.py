"""Grouped cross-validation over the model x input-mode grid."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import EmptySelection, PipelineError, StageError, TooFewParticipants, UnknownParticipant
from .features import MODES, FeatureMatrix
from .models import GradientBoostedTreesRegressor, LSTMRegressor, RandomForestRegressor

MODELS = ("rf", "gbt", "lstm")
MODEL_LABELS = {"rf": "Random Forest", "gbt": "GBT", "lstm": "LSTM"}
MODE_LABELS = {"basic": "Basic", "features": "Features", "context": "Context"}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    folds: int = 5
    modes: tuple[str, ...] = MODES
    models: tuple[str, ...] = MODELS
    baseline_window_s: float = 60.0
    sequence_len: int = 40
    split: str = "participant"
    repeats: int = 1
    # every n-th row of each training participant feeds the tree models
    tree_train_stride: int = 8
    lstm_train_stride: int = 200
    lstm_epochs: int = 50
    lstm_batch_size: int = 32
    lstm_loss: str = "mse"
    lstm_dtype: str = "float32"
    rf_n_estimators: int = 50
    gbt_n_estimators: int = 100
    threads: int = 1

    def __post_init__(self):
        for m in self.models:
            if m not in MODELS:
                raise ValueError(f"unknown model {m!r}; expected a subset of {MODELS}")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}; expected a subset of {MODES}")
        if self.split not in ("participant", "row"):
            raise ValueError(f"unknown split {self.split!r}")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]

    def test_participants(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignment.items() if f == fold)

    def train_participants(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignment.items() if f != fold)

    def sizes(self) -> list[int]:
        return [sum(1 for f in self.assignment.values() if f == i) for i in range(self.k)]


def make_folds(participants: Sequence[str], k: int = 5, seed: int = 0) -> FoldPlan:
    """Seeded shuffle of the participants, then round-robin assignment to ``k`` folds."""
    people = sorted(set(participants))
    if len(people) < k:
        raise TooFewParticipants(f"{len(people)} participants cannot fill {k} folds")
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 5])).permutation(len(people))
    return FoldPlan(k, {people[j]: i % k for i, j in enumerate(perm)})


def compute_metrics(y, yhat, mask=None) -> tuple[float, float]:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("y and yhat differ in shape")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        y, yhat = y[mask], yhat[mask]
    if y.size == 0:
        raise EmptySelection("metric selection holds no samples")
    err = y - yhat
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err * err)))


@dataclass(eq=False)
class RunResult:
    model: str
    mode: str
    mae: float
    rmse: float
    mae_filtered: float
    rmse_filtered: float
    fold_metrics: list[dict]
    participant_id: np.ndarray
    t: np.ndarray
    phase: np.ndarray
    is_bat: np.ndarray
    target: np.ndarray
    prediction: np.ndarray
    raw_prediction: np.ndarray
    fold: np.ndarray
    fold_splits: list[tuple[list[str], list[str]]] = field(default_factory=list)
    repeat: int = 0

    @property
    def cell(self) -> str:
        suffix = f"_r{self.repeat}" if self.repeat else ""
        return f"{self.model}_{self.mode}{suffix}"

    @property
    def label(self) -> str:
        suffix = f" (repeat {self.repeat})" if self.repeat else ""
        return f"{MODEL_LABELS[self.model]} {MODE_LABELS[self.mode]}{suffix}"


def unit_seed(master: int, model: str, mode: str, fold: int, repeat: int = 0) -> int:
    seq = np.random.SeedSequence([int(master), MODELS.index(model), MODES.index(mode), int(fold), int(repeat)])
    return int(seq.generate_state(1)[0])


def make_model(kind: str, cfg: ExperimentConfig, seed: int):
    if kind == "rf":
        return RandomForestRegressor(n_estimators=cfg.rf_n_estimators, random_state=seed)
    if kind == "gbt":
        return GradientBoostedTreesRegressor(n_estimators=cfg.gbt_n_estimators)
    if kind == "lstm":
        return LSTMRegressor(
            seq_len=cfg.sequence_len, epochs=cfg.lstm_epochs, batch_size=cfg.lstm_batch_size,
            loss=cfg.lstm_loss, train_stride=cfg.lstm_train_stride, dtype=cfg.lstm_dtype,
            random_state=seed,
        )
    raise ValueError(f"unknown model {kind!r}")


def _stride_rows(fm: FeatureMatrix, rows: np.ndarray, stride: int) -> np.ndarray:
    """Every ``stride``-th row of each participant among ``rows`` (which are in matrix order)."""
    if stride <= 1:
        return rows
    pids = fm.participant_id[rows]
    keep = np.zeros(rows.size, dtype=bool)
    for pid in dict.fromkeys(pids.tolist()):
        idx = np.flatnonzero(pids == pid)
        keep[idx[::stride]] = True
    return rows[keep]


def fold_rows(fm: FeatureMatrix, plan: FoldPlan, fold: int, split: str, seed: int):
    """``(train_rows, test_rows)`` index arrays for one fold."""
    if split == "participant":
        test = np.isin(fm.participant_id, plan.test_participants(fold))
    else:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 6]))
        test = (rng.permutation(len(fm)) % plan.k) == fold
    return np.flatnonzero(~test), np.flatnonzero(test)


def _run_unit(fm: FeatureMatrix, model: str, mode: str, fold: int, plan: FoldPlan,
              cfg: ExperimentConfig, repeat: int):
    train, test = fold_rows(fm, plan, fold, cfg.split, cfg.seed + repeat)
    if cfg.split == "participant":
        leaked = set(fm.participant_id[train]) & set(fm.participant_id[test])
        if leaked:
            raise PipelineError(f"participants {sorted(leaked)} appear in train and test")
    seed = unit_seed(cfg.seed, model, mode, fold, repeat)
    est = make_model(model, cfg, seed)
    with threadpool_limits(limits=1):
        if model == "lstm":
            est.fit(fm.rows[train], fm.target[train], groups=fm.participant_id[train])
            raw = est.predict_raw(fm.rows[test], groups=fm.participant_id[test])
        else:
            sub = _stride_rows(fm, train, cfg.tree_train_stride)
            est.fit(fm.rows[sub], fm.target[sub])
            raw = est.predict_raw(fm.rows[test])
    split = (sorted(set(fm.participant_id[train].tolist())), sorted(set(fm.participant_id[test].tolist())))
    return test, raw, split


_SHARED: dict = {}


def _init_worker(matrices, plan_by_repeat, cfg):
    _SHARED.update(matrices=matrices, plans=plan_by_repeat, cfg=cfg)


def _worker(args):
    model, mode, fold, repeat = args
    try:
        return _run_unit(_SHARED["matrices"][mode], model, mode, fold,
                         _SHARED["plans"][repeat], _SHARED["cfg"], repeat)
    except PipelineError as exc:
        raise StageError("evaluate", exc, context=f"cell {model}_{mode} fold {fold}") from exc


def run_experiment_grid(
    matrices: dict[str, FeatureMatrix],
    plan: FoldPlan,
    cfg: ExperimentConfig,
    progress=None,
) -> list[RunResult]:
    """Train and score every (model, mode) cell on every fold.

    ``matrices`` maps each mode to the pooled feature matrix of all
    participants. The same fold plan serves every cell. Metrics are pooled
    over all held-out samples (micro-average); per-fold values are kept too.
    """
    plans = [plan] + [
        make_folds(list(plan.assignment), plan.k, cfg.seed + r) for r in range(1, cfg.repeats)
    ]
    units = [(model, mode, fold, r) for r in range(cfg.repeats) for model in cfg.models
             for mode in cfg.modes for fold in range(plan.k)]
    threads = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
    if threads == 1:
        _init_worker(matrices, plans, cfg)
        outputs = []
        for u in units:
            outputs.append(_worker(u))
            if progress:
                progress(u)
    else:
        with ProcessPoolExecutor(threads, initializer=_init_worker, initargs=(matrices, plans, cfg)) as pool:
            outputs = list(pool.map(_worker, units))
    by_unit = dict(zip(units, outputs))

    results = []
    for r in range(cfg.repeats):
        for model in cfg.models:
            for mode in cfg.modes:
                fm = matrices[mode]
                pred_raw = np.full(len(fm), np.nan)
                fold_of = np.full(len(fm), -1)
                fold_metrics, splits = [], []
                for fold in range(plan.k):
                    test, raw, split = by_unit[(model, mode, fold, r)]
                    pred_raw[test] = raw
                    fold_of[test] = fold
                    splits.append(split)
                    clipped = np.clip(raw, 0.0, 1.0)
                    mae, rmse = compute_metrics(fm.target[test], clipped)
                    bat = fm.is_bat[test]
                    mae_f, rmse_f = compute_metrics(fm.target[test], clipped, bat) if bat.any() else (math.nan, math.nan)
                    fold_metrics.append({"fold": fold, "n": int(test.size), "mae": mae, "rmse": rmse,
                                         "mae_filtered": mae_f, "rmse_filtered": rmse_f})
                pred = np.clip(pred_raw, 0.0, 1.0)
                mae, rmse = compute_metrics(fm.target, pred)
                mae_f, rmse_f = compute_metrics(fm.target, pred, fm.is_bat)
                results.append(RunResult(
                    model, mode, mae, rmse, mae_f, rmse_f, fold_metrics,
                    fm.participant_id, fm.t, fm.phase, fm.is_bat, fm.target, pred, pred_raw,
                    fold_of, splits, r,
                ))
    return results


def mean_baseline_metrics(fm: FeatureMatrix, plan: FoldPlan, split: str = "participant", seed: int = 0):
    """MAE/RMSE of predicting the training-fold mean target for every held-out sample."""
    pred = np.empty(len(fm))
    for fold in range(plan.k):
        train, test = fold_rows(fm, plan, fold, split, seed)
        pred[test] = float(np.mean(fm.target[train]))
    return compute_metrics(fm.target, pred)


# --- reporting -------------------------------------------------------------

RESULT_FIELDS = ("model", "mode", "mae", "rmse", "mae_filtered", "rmse_filtered", "n", "n_filtered")


def results_table(results: Sequence[RunResult], header_note: str | None = None) -> tuple[str, str]:
    """Return ``(csv_text, aligned_text)``; CSV keeps full precision, text rounds to 3 decimals."""
    notes = [header_note] if header_note else []
    notes.append("metrics pooled over all held-out samples (micro-average); filtered = BAT samples only")
    csv_lines = [f"# {n}" for n in notes] + [",".join(RESULT_FIELDS)]
    for r in results:
        csv_lines.append(",".join([
            r.model, r.mode,
            repr(r.mae), repr(r.rmse), repr(r.mae_filtered), repr(r.rmse_filtered),
            str(r.target.size), str(int(r.is_bat.sum())),
        ]))
    rows = [(r.label, r.mae, r.rmse, r.mae_filtered, r.rmse_filtered) for r in results]
    return "\n".join(csv_lines) + "\n", text_table(rows, notes)


def text_table(rows: Sequence[tuple], notes: Sequence[str] = ()) -> str:
    """Aligned table of ``(label, mae, rmse, mae_filtered, rmse_filtered)`` rows at 3 decimals."""
    heads = ("Method", "MAE", "RMSE", "MAE (Filtered)", "RMSE (Filtered)")
    cells = [(label, *(f"{v:.3f}" for v in vals)) for label, *vals in rows]
    widths = [max([len(h)] + [len(c[i]) for c in cells]) for i, h in enumerate(heads)]

    def fmt(line):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(line, widths)))

    text = [f"# {n}" for n in notes] + [fmt(heads), "  ".join("-" * w for w in widths)]
    text += [fmt(c) for c in cells]
    return "\n".join(text) + "\n"


def read_results_csv(path: str | Path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    head = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        rec = dict(zip(head, ln.split(",")))
        for k in ("mae", "rmse", "mae_filtered", "rmse_filtered"):
            rec[k] = float(rec[k])
        for k in ("n", "n_filtered"):
            rec[k] = int(rec[k])
        out.append(rec)
    return out


def export_predictions(result: RunResult, out_dir: str | Path, participants: Sequence[str] | None = None) -> list[Path]:
    """One ``participant,t,phase,target,prediction`` CSV per participant, ordered by time."""
    out = Path(out_dir) / result.cell
    known = list(dict.fromkeys(result.participant_id.tolist()))
    wanted = known if participants is None else list(participants)
    for pid in wanted:
        if pid not in known:
            raise UnknownParticipant(f"no predictions for participant {pid!r}")
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for pid in wanted:
        idx = np.flatnonzero(result.participant_id == pid)
        idx = idx[np.argsort(result.t[idx], kind="stable")]
        lines = ["participant,t,phase,target,prediction"]
        for i in idx:
            lines.append(f"{pid},{float(result.t[i])!r},{result.phase[i]},"
                         f"{float(result.target[i])!r},{float(result.prediction[i])!r}")
        path = out / f"{pid}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def read_predictions_csv(path: str | Path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [ln.split(",") for ln in lines[1:] if ln]
    return {
        "participant": np.array([r[0] for r in rows]),
        "t": np.array([float(r[1]) for r in rows]),
        "phase": np.array([r[2] for r in rows]),
        "target": np.array([float(r[3]) for r in rows]),
        "prediction": np.array([float(r[4]) for r in rows]),
    }
