"""Corpus-level orchestration shared by the CLI and the acceptance tests."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Sequence

from .errors import InsufficientData, PipelineError, StageError
from .evaluation import (
    ExperimentConfig,
    RunResult,
    export_predictions,
    make_folds,
    mean_baseline_metrics,
    results_table,
    run_experiment_grid,
)
from .features import FeatureMatrix, SessionFeaturizer, correlation_report, write_correlation_csv
from .preprocess import PreprocessConfig, SessionGrid, build_session_grid, read_grid_csv, write_grid_csv
from .session import find_sessions, load_session_dir


def seed_note(seed: int) -> str:
    return f"master seed {seed}"


def preprocess_corpus(
    data_dir: str | Path,
    grids_dir: str | Path,
    debug_dir: str | Path | None = None,
    config: PreprocessConfig | None = None,
) -> list[Path]:
    sessions = find_sessions(data_dir)
    if not sessions:
        raise InsufficientData(f"no sessions found under {data_dir}")
    out = Path(grids_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for sdir in sessions:
        session = load_session_dir(sdir)
        dbg = Path(debug_dir) / session.participant_id if debug_dir else None
        grid = build_session_grid(session, config, dbg)
        path = out / f"{session.participant_id}.csv"
        write_grid_csv(grid, path)
        paths.append(path)
    return paths


def load_grids(grids_dir: str | Path) -> list[SessionGrid]:
    paths = sorted(Path(grids_dir).glob("*.csv"))
    if not paths:
        raise InsufficientData(f"no grid files under {grids_dir}")
    return [read_grid_csv(p) for p in paths]


def correlate(grids: Sequence[SessionGrid], out_path: str | Path, seed: int, baseline_window_s: float = 60.0):
    rows = correlation_report(grids, baseline_window_s)
    write_correlation_csv(rows, out_path, header_note=seed_note(seed))
    return rows


def build_matrices(grids: Sequence[SessionGrid], modes: Sequence[str], baseline_window_s: float) -> dict[str, FeatureMatrix]:
    return {m: SessionFeaturizer(m, baseline_window_s).transform(grids) for m in modes}


def evaluate(
    grids: Sequence[SessionGrid],
    out_dir: str | Path,
    cfg: ExperimentConfig,
    progress: Callable | None = None,
) -> tuple[list[RunResult], str]:
    """Run the grid and write its artefacts under ``out_dir``.

    ``results.csv`` / ``results.txt`` hold the metric table, ``folds.json`` the
    fold plan, ``splits.json`` every cell's per-fold train/test participants and
    ``predictions/`` the held-out predictions.  Returns results and text table.
    """
    try:
        matrices = build_matrices(grids, cfg.modes, cfg.baseline_window_s)
    except PipelineError as exc:
        raise StageError("features", exc) from exc
    plan = make_folds([g.participant_id for g in grids], cfg.folds, cfg.seed)
    results = run_experiment_grid(matrices, plan, cfg, progress)
    any_fm = next(iter(matrices.values()))
    base_mae, base_rmse = mean_baseline_metrics(any_fm, plan, cfg.split, cfg.seed)
    note = (f"{seed_note(cfg.seed)}; {cfg.folds}-fold {cfg.split}-grouped CV; "
            f"mean-baseline mae={base_mae!r} rmse={base_rmse!r}")
    csv_text, txt_text = results_table(results, header_note=note)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(csv_text, encoding="utf-8")
    (out / "results.txt").write_text(txt_text, encoding="utf-8")
    (out / "folds.json").write_text(
        json.dumps({"seed": cfg.seed, "k": plan.k, "assignment": plan.assignment,
                    "config": asdict(cfg)}, indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    splits = {r.cell: [{"fold": k, "train": tr, "test": te} for k, (tr, te) in enumerate(r.fold_splits)]
              for r in results}
    (out / "splits.json").write_text(json.dumps(splits, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    for r in results:
        export_predictions(r, out / "predictions")
    return results, txt_text
