"""``wearable-anxiety`` command-line entry point.

Settings come from built-in defaults, then the master config JSON (``--config``
or the ``WEARABLE_ANXIETY_CONFIG`` environment variable), then flags; flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

from .errors import PipelineError, UnknownParticipant
from .evaluation import (
    MODE_LABELS,
    MODEL_LABELS,
    MODELS,
    ExperimentConfig,
    read_predictions_csv,
    read_results_csv,
    text_table,
)
from .features import MODES, SessionFeaturizer, write_feature_csv
from .pipeline import correlate, evaluate, load_grids, preprocess_corpus, seed_note
from .session import find_sessions, load_session_dir
from .synth import SynthConfig, generate_corpus

CONFIG_ENV = "WEARABLE_ANXIETY_CONFIG"

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PIPELINE = 0, 2, 3, 4

DEFAULTS = {
    "seed": 7,
    "folds": 5,
    "modes": list(MODES),
    "models": list(MODELS),
    "baseline_window_s": 60.0,
    "sequence_len": 40,
    "data_dir": None,
    "out_dir": None,
    "n_participants": 23,
    "threads": 0,
    "split": "participant",
    "repeats": 1,
}

log = logging.getLogger("wearable_anxiety")


class ConfigError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def load_config(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    cfg = dict(DEFAULTS)
    if not path:
        return cfg
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    extra = set(doc) - set(DEFAULTS) - {f.name for f in fields(ExperimentConfig)}
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    cfg.update(doc)
    return cfg


def _merge(cfg: dict, args: argparse.Namespace, keys) -> dict:
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _require(cfg: dict, key: str, flag: str) -> Path:
    if not cfg.get(key):
        raise ConfigError(f"{flag} is required (or set {key!r} in the config file)")
    return Path(cfg[key])


def _existing_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise FileNotFoundError(f"{what} directory not found: {path}")
    return path


def _experiment_config(cfg: dict) -> ExperimentConfig:
    names = {f.name for f in fields(ExperimentConfig)}
    kwargs = {k: v for k, v in cfg.items() if k in names}
    for k in ("modes", "models"):
        kwargs[k] = tuple(kwargs[k])
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --- commands --------------------------------------------------------------


def cmd_synth(args, cfg) -> int:
    cfg = _merge(cfg, args, ("seed", "n_participants"))
    if args.out is not None:
        cfg["data_dir"] = args.out
    out = _require(cfg, "data_dir", "--out")
    try:
        synth_cfg = SynthConfig(n_participants=int(cfg["n_participants"]), seed=int(cfg["seed"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"# {seed_note(synth_cfg.seed)}")
    print(generate_corpus(synth_cfg, out))
    return EXIT_OK


def cmd_ingest(args, cfg) -> int:
    cfg = _merge(cfg, args, ("data_dir",))
    data = _existing_dir(_require(cfg, "data_dir", "--data"), "data")
    sessions = find_sessions(data)
    if not sessions:
        raise PipelineError(f"no sessions found under {data}")
    print("participant_id,duration_s,ratings,ibi_beats")
    for sdir in sessions:
        s = load_session_dir(sdir)
        lo, hi = s.common_range
        print(f"{s.participant_id},{hi - lo:.3f},{len(s.timeline.ratings())},{s.ibi.intervals.size}")
    return EXIT_OK


def cmd_preprocess(args, cfg) -> int:
    cfg = _merge(cfg, args, ("data_dir", "out_dir"))
    data = _existing_dir(_require(cfg, "data_dir", "--data"), "data")
    out = _require(cfg, "out_dir", "--out")
    debug = out / "debug" if args.debug else None
    for path in preprocess_corpus(data, out / "grids", debug):
        print(path)
    return EXIT_OK


def cmd_features(args, cfg) -> int:
    cfg = _merge(cfg, args, ("out_dir", "modes", "baseline_window_s"))
    out = _require(cfg, "out_dir", "--out")
    grids = load_grids(_existing_dir(out / "grids", "grids"))
    for mode in cfg["modes"]:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        fm = SessionFeaturizer(mode, cfg["baseline_window_s"]).transform(grids)
        target = out / "features" / mode
        target.mkdir(parents=True, exist_ok=True)
        for pid in dict.fromkeys(fm.participant_id.tolist()):
            path = target / f"{pid}.csv"
            write_feature_csv(fm.subset(fm.participant_id == pid), path)
        print(target)
    return EXIT_OK


def cmd_correlate(args, cfg) -> int:
    cfg = _merge(cfg, args, ("out_dir", "baseline_window_s", "seed"))
    out = _require(cfg, "out_dir", "--out")
    grids = load_grids(_existing_dir(out / "grids", "grids"))
    path = out / "correlations.csv"
    correlate(grids, path, int(cfg["seed"]), cfg["baseline_window_s"])
    print(f"# {seed_note(int(cfg['seed']))}")
    print(path)
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    cfg = _merge(cfg, args, ("out_dir", "seed", "folds", "modes", "models", "baseline_window_s",
                             "sequence_len", "threads", "split", "repeats"))
    out = _require(cfg, "out_dir", "--out")
    exp = _experiment_config(cfg)
    grids = load_grids(_existing_dir(out / "grids", "grids"))
    started = time.monotonic()

    def progress(unit):
        log.info("finished %s_%s fold %d (%.1f s elapsed)", unit[0], unit[1], unit[2], time.monotonic() - started)

    _, text = evaluate(grids, out, exp, progress)
    print(text, end="")
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    cfg = _merge(cfg, args, ("out_dir",))
    out = _require(cfg, "out_dir", "--out")
    path = out / "results.csv"
    notes = [ln[2:] for ln in path.read_text(encoding="utf-8").splitlines() if ln.startswith("# ")]
    rows = [(f"{MODEL_LABELS[r['model']]} {MODE_LABELS[r['mode']]}", r["mae"], r["rmse"],
             r["mae_filtered"], r["rmse_filtered"]) for r in read_results_csv(path)]
    print(text_table(rows, notes), end="")
    return EXIT_OK


def cmd_export_plot_data(args, cfg) -> int:
    """Merge every cell's per-participant predictions into one wide CSV per participant."""
    cfg = _merge(cfg, args, ("out_dir",))
    out = _require(cfg, "out_dir", "--out")
    pred_root = _existing_dir(out / "predictions", "predictions")
    cells = args.cells or sorted(p.name for p in pred_root.iterdir() if p.is_dir())
    for c in cells:
        _existing_dir(pred_root / c, f"cell {c!r}")
    known = sorted(p.stem for p in (pred_root / cells[0]).glob("*.csv"))
    wanted = args.participants or known
    for pid in wanted:
        if pid not in known:
            raise UnknownParticipant(f"no predictions for participant {pid!r}")
    target = out / "plot_data"
    target.mkdir(parents=True, exist_ok=True)
    for pid in wanted:
        series = {c: read_predictions_csv(pred_root / c / f"{pid}.csv") for c in cells}
        first = series[cells[0]]
        lines = [",".join(["participant", "t", "phase", "target", *cells])]
        for i in range(first["t"].size):
            vals = [repr(float(series[c]["prediction"][i])) for c in cells]
            lines.append(f"{pid},{float(first['t'][i])!r},{first['phase'][i]},{float(first['target'][i])!r},"
                         + ",".join(vals))
        path = target / f"{pid}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(path)
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.HelpFormatter
    parser = argparse.ArgumentParser(
        prog="wearable-anxiety", formatter_class=fmt,
        description="Anxiety regression from wearable signals: synthetic corpora, preprocessing, evaluation.",
    )
    parser.add_argument("--config", default=None,
                        help=f"master config JSON (default: ${CONFIG_ENV} if set)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    def out_flag(p):
        p.add_argument("--out", dest="out_dir", default=None, help="output directory (default: out_dir from the config)")

    p = add("synth", cmd_synth, "generate a synthetic session corpus")
    p.add_argument("--n", dest="n_participants", type=int, default=None,
                   help=f"participants (default: {DEFAULTS['n_participants']})")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default: {DEFAULTS['seed']})")
    p.add_argument("--out", default=None, help="corpus directory (default: data_dir from the config)")

    p = add("ingest", cmd_ingest, "parse and validate every session without writing anything")
    p.add_argument("--data", dest="data_dir", default=None, help="corpus directory (default: data_dir from the config)")

    p = add("preprocess", cmd_preprocess, "build one 4 Hz grid per session under <out>/grids")
    p.add_argument("--data", dest="data_dir", default=None, help="corpus directory (default: data_dir from the config)")
    out_flag(p)
    p.add_argument("--debug", action="store_true", help="dump stage intermediates under <out>/debug (default: off)")

    p = add("features", cmd_features, "write per-participant feature matrices under <out>/features")
    out_flag(p)
    p.add_argument("--modes", type=_csv_list, default=None, help=f"comma list (default: {','.join(MODES)})")
    p.add_argument("--baseline-window", dest="baseline_window_s", type=float, default=None,
                   help=f"baseline window in s (default: {DEFAULTS['baseline_window_s']})")

    p = add("correlate", cmd_correlate, "write <out>/correlations.csv")
    out_flag(p)
    p.add_argument("--seed", type=int, default=None, help=f"master seed for the header (default: {DEFAULTS['seed']})")
    p.add_argument("--baseline-window", dest="baseline_window_s", type=float, default=None,
                   help=f"baseline window in s (default: {DEFAULTS['baseline_window_s']})")

    p = add("evaluate", cmd_evaluate, "cross-validate the model x mode grid and write results")
    out_flag(p)
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default: {DEFAULTS['seed']})")
    p.add_argument("--folds", type=int, default=None, help=f"CV folds (default: {DEFAULTS['folds']})")
    p.add_argument("--models", type=_csv_list, default=None, help=f"comma list (default: {','.join(MODELS)})")
    p.add_argument("--modes", type=_csv_list, default=None, help=f"comma list (default: {','.join(MODES)})")
    p.add_argument("--baseline-window", dest="baseline_window_s", type=float, default=None,
                   help=f"baseline window in s (default: {DEFAULTS['baseline_window_s']})")
    p.add_argument("--sequence-len", dest="sequence_len", type=int, default=None,
                   help=f"LSTM window length in samples (default: {DEFAULTS['sequence_len']})")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes; 0 = all cores, 1 = bit-reproducible serial run (default: 0)")
    p.add_argument("--split", choices=("participant", "row"), default=None,
                   help="CV grouping (default: participant)")
    p.add_argument("--repeats", type=int, default=None, help="CV repetitions with reseeded folds (default: 1)")

    p = add("report", cmd_report, "print the results table from <out>/results.csv")
    out_flag(p)

    p = add("export-plot-data", cmd_export_plot_data,
            "merge per-cell predictions into <out>/plot_data/<participant>.csv")
    out_flag(p)
    p.add_argument("--cells", type=_csv_list, default=None, help="comma list of cells (default: all)")
    p.add_argument("--participants", type=_csv_list, default=None, help="comma list (default: all)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
