"""Signal conditioning: raw session files to an aligned 4 Hz session grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AllMissing,
    EmptyChannel,
    GapTooLong,
    NoRatings,
    NoValidWindows,
    PipelineError,
    SignalTooShort,
    StageError,
)
from .filters import FilterSpec, butterworth_filter
from .session import (
    ChannelKind,
    IbiSeries,
    EventTimeline,
    Phase,
    RawSession,
    TimeSeriesChannel,
    format_channel,
    format_ibi,
)

GRID_RATE = 4.0

GRID_COLUMNS = (
    "hr", "temp", "eda_tonic", "eda_phasic", "hrv_sdnn", "hrv_rmssd", "anxiety", "distance",
)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 + k / rate`` for ``k in range(n)``."""

    t0: float
    n: int
    rate: float = GRID_RATE

    @classmethod
    def covering(cls, start: float, end: float, rate: float = GRID_RATE) -> "TimeGrid":
        steps = math.ceil((end - start) * rate - 1e-9)
        return cls(float(start), max(steps, 0) + 1, rate)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n) / self.rate


@dataclass(frozen=True)
class PreprocessConfig:
    max_gap: int = 4
    lowpass_cutoff: float = 0.5
    filter_order: int = 4
    tonic_cutoff: float = 0.05
    ibi_min: float = 0.3
    ibi_max: float = 2.0
    hrv_window: float = 300.0


@dataclass(eq=False)
class SessionGrid:
    participant_id: str
    t0: float
    columns: dict[str, np.ndarray]
    phase: np.ndarray  # Phase values as strings
    rate: float = GRID_RATE
    valid: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = self.phase.size
        for name, col in self.columns.items():
            if col.size != n:
                raise ValueError(f"column {name} has {col.size} samples, expected {n}")
        for name in self.columns:
            self.valid.setdefault(name, np.isfinite(self.columns[name]))

    def __len__(self) -> int:
        return self.phase.size

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.rate

    @property
    def is_bat(self) -> np.ndarray:
        return self.phase != Phase.QUESTIONNAIRE.value


# --- individual stages -----------------------------------------------------


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open ``[start, stop)`` runs where ``mask`` is True."""
    if not mask.any():
        return []
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def interpolate_gaps(channel: TimeSeriesChannel, max_gap: int = 4) -> TimeSeriesChannel:
    missing = channel.missing | ~np.isfinite(channel.values)
    if missing.all():
        raise AllMissing(f"{channel.kind.value}: every sample is missing")
    if not missing.any():
        return channel.with_values(channel.values.copy())
    for start, stop in _runs(missing):
        if stop - start > max_gap:
            t = channel.times
            raise GapTooLong(
                f"{channel.kind.value}: {stop - start} missing samples exceed max_gap={max_gap}",
                float(t[start]), float(t[stop - 1]),
            )
    idx = np.arange(channel.values.size)
    good = ~missing
    values = channel.values.copy()
    # np.interp extends edge values, which is the nearest-valid fill at the ends.
    values[missing] = np.interp(idx[missing], idx[good], channel.values[good])
    return channel.with_values(values)


def decompose_eda(eda, rate: float, cutoff: float = 0.05, order: int = 4):
    """Split EDA into (tonic, phasic); phasic is a zero-phase high-pass of the input."""
    eda = np.asarray(eda, dtype=float)
    phasic = butterworth_filter(eda, rate, FilterSpec(cutoff, order, "highpass", True))
    tonic = eda - phasic
    return tonic, phasic


def clean_ibi(ibi: IbiSeries, lo: float = 0.3, hi: float = 2.0) -> IbiSeries:
    keep = (ibi.intervals >= lo) & (ibi.intervals <= hi)
    return IbiSeries(ibi.start_time, ibi.offsets[keep], ibi.intervals[keep])


def _fill_nearest(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace invalid entries by the nearest valid one; ties go to the earlier sample."""
    idx = np.arange(values.size)
    good = idx[valid]
    pos = np.searchsorted(good, idx)
    left = good[np.clip(pos - 1, 0, good.size - 1)]
    right = good[np.clip(pos, 0, good.size - 1)]
    take_right = (np.abs(right - idx) < np.abs(idx - left)) | (pos == 0)
    src = np.where(valid, idx, np.where(take_right, right, left))
    return values[src]


def hrv_sliding(ibi: IbiSeries, grid: TimeGrid, window: float = 300.0):
    """SDNN and RMSSD (ms) over trailing windows ``(t - window, t]`` at each grid time.

    Windows need at least two intervals; other samples take the nearest valid value.
    """
    beats = ibi.beat_times
    iv_ms = ibi.intervals * 1000.0
    times = grid.times
    lo = np.searchsorted(beats, times - window, side="right")
    hi = np.searchsorted(beats, times, side="right")
    sdnn = np.full(grid.n, np.nan)
    rmssd = np.full(grid.n, np.nan)
    prev = None
    for k in range(grid.n):
        a, b = int(lo[k]), int(hi[k])
        if b - a < 2:
            continue
        if prev is not None and prev[0] == a and prev[1] == b:
            sdnn[k], rmssd[k] = sdnn[k - 1], rmssd[k - 1]
            continue
        sdnn[k], rmssd[k] = _window_hrv(iv_ms[a:b])
        prev = (a, b)
    valid = np.isfinite(sdnn)
    if not valid.any():
        raise NoValidWindows("no HRV window holds two or more clean intervals")
    make = lambda v, kind: TimeSeriesChannel(kind, grid.t0, grid.rate, _fill_nearest(v, valid))
    return make(sdnn, ChannelKind.HRV_SDNN), make(rmssd, ChannelKind.HRV_RMSSD)


def _window_hrv(iv_ms: np.ndarray) -> tuple[float, float]:
    sdnn = float(np.std(iv_ms, ddof=1))
    d = np.diff(iv_ms)
    rmssd = float(np.sqrt(np.mean(d * d)))
    return sdnn, rmssd


def resample_to_4hz(channel: TimeSeriesChannel, grid: TimeGrid) -> TimeSeriesChannel:
    good = ~channel.missing & np.isfinite(channel.values)
    if not good.any():
        raise EmptyChannel(f"{channel.kind.value}: no samples to resample")
    values = np.interp(grid.times, channel.times[good], channel.values[good])
    return TimeSeriesChannel(channel.kind, grid.t0, grid.rate, values)


def interpolate_labels(timeline: EventTimeline, grid: TimeGrid):
    """Returns ``(anxiety, distance, distance_valid, phase)`` arrays on the grid."""
    rt, rv = timeline.ratings()
    if rt.size == 0:
        raise NoRatings("timeline holds no anxiety ratings")
    times = grid.times
    anxiety = np.interp(times, rt, rv)
    distance = np.full(grid.n, np.nan)
    phase = np.full(grid.n, Phase.QUESTIONNAIRE.value, dtype=object)
    dt, dv = timeline.distance_markers()
    for label, start, end in timeline.phase_intervals():
        inside = (times >= start) & (times < end)
        phase[inside] = label.value
        sel = (dt >= start) & (dt <= end)
        if inside.any() and sel.any():
            distance[inside] = np.interp(times[inside], dt[sel], dv[sel])
    return anxiety, distance, np.isfinite(distance), phase.astype(str)


# --- full pipeline ---------------------------------------------------------


class _Stages:
    def __init__(self, pid: str, debug_dir: Path | None):
        self.pid = pid
        self.debug_dir = debug_dir
        self.name = ""

    def __call__(self, name: str):
        self.name = name
        return self

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, PipelineError) and not isinstance(exc, StageError):
            raise StageError(self.name, exc, context=f"session {self.pid}") from exc
        return False

    def dump(self, channel: TimeSeriesChannel, name: str | None = None):
        if self.debug_dir is None:
            return
        out = self.debug_dir / self.name
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name or channel.kind.value}.csv").write_text(format_channel(channel), encoding="utf-8")


def build_session_grid(
    session: RawSession,
    config: PreprocessConfig | None = None,
    debug_dir: str | Path | None = None,
) -> SessionGrid:
    cfg = config or PreprocessConfig()
    stage = _Stages(session.participant_id, Path(debug_dir) if debug_dir else None)
    grid = TimeGrid.covering(*session.common_range)
    ch = session.channels

    with stage("gaps"):
        filled = {k: interpolate_gaps(ch[k], cfg.max_gap) for k in (ChannelKind.EDA, ChannelKind.HR, ChannelKind.TEMP)}
        for c in filled.values():
            stage.dump(c)
    with stage("lowpass"):
        eda = filled[ChannelKind.EDA]
        lp = butterworth_filter(eda.values, eda.rate, FilterSpec(cfg.lowpass_cutoff, cfg.filter_order, "lowpass"))
        eda_lp = eda.with_values(lp, ChannelKind.EDA_FILTERED)
        stage.dump(eda_lp)
    with stage("decompose"):
        tonic, phasic = decompose_eda(lp, eda.rate, cfg.tonic_cutoff, cfg.filter_order)
        tonic_ch = eda.with_values(tonic, ChannelKind.EDA_TONIC)
        phasic_ch = eda.with_values(phasic, ChannelKind.EDA_PHASIC)
        stage.dump(tonic_ch)
        stage.dump(phasic_ch)
    with stage("ibi"):
        ibi = clean_ibi(session.ibi, cfg.ibi_min, cfg.ibi_max)
        if stage.debug_dir is not None:
            (stage.debug_dir / "ibi").mkdir(parents=True, exist_ok=True)
            (stage.debug_dir / "ibi" / "IBI.csv").write_text(format_ibi(ibi), encoding="utf-8")
    with stage("hrv"):
        sdnn, rmssd = hrv_sliding(ibi, grid, cfg.hrv_window)
        stage.dump(sdnn)
        stage.dump(rmssd)
    with stage("resample"):
        hr = resample_to_4hz(filled[ChannelKind.HR], grid)
        temp = resample_to_4hz(filled[ChannelKind.TEMP], grid)
        tonic_g = resample_to_4hz(tonic_ch, grid)
        phasic_g = resample_to_4hz(phasic_ch, grid)
        for c in (hr, temp, tonic_g, phasic_g):
            stage.dump(c)
    with stage("labels"):
        anxiety, distance, dvalid, phase = interpolate_labels(session.timeline, grid)
        stage.dump(TimeSeriesChannel(ChannelKind.ANXIETY, grid.t0, grid.rate, anxiety))
        stage.dump(TimeSeriesChannel(ChannelKind.DISTANCE, grid.t0, grid.rate, distance, ~dvalid))

    columns = {
        "hr": hr.values,
        "temp": temp.values,
        "eda_tonic": tonic_g.values,
        "eda_phasic": phasic_g.values,
        "hrv_sdnn": sdnn.values,
        "hrv_rmssd": rmssd.values,
        "anxiety": anxiety,
        "distance": distance,
    }
    return SessionGrid(session.participant_id, grid.t0, columns, phase)


# --- grid files ------------------------------------------------------------

GRID_HEADER = ("participant_id", "t") + GRID_COLUMNS + ("phase",)


def write_grid_csv(grid: SessionGrid, path: str | Path) -> None:
    pid = grid.participant_id
    times = grid.times
    cols = [grid.columns[c] for c in GRID_COLUMNS]
    lines = [",".join(GRID_HEADER)]
    for k in range(len(grid)):
        cells = [pid, repr(float(times[k]))]
        for c in cols:
            v = c[k]
            cells.append(repr(float(v)) if np.isfinite(v) else "")
        cells.append(grid.phase[k])
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_grid_csv(path: str | Path) -> SessionGrid:
    lines = Path(path).read_text(encoding="utf-8").rstrip("\n").split("\n")
    header = tuple(lines[0].split(","))
    if header != GRID_HEADER:
        raise ValueError(f"{path}: unexpected grid header {header}")
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        raise SignalTooShort(f"{path}: grid has no rows")
    pid = rows[0][0]
    t = np.array([float(r[1]) for r in rows])
    columns = {}
    for j, name in enumerate(GRID_COLUMNS, start=2):
        columns[name] = np.array([float(r[j]) if r[j] else np.nan for r in rows])
    phase = np.array([r[-1] for r in rows])
    rate = GRID_RATE
    return SessionGrid(pid, float(t[0]), columns, phase, rate)
