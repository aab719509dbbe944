"""Session data model and the on-disk recording format.

A session lives in a directory::

    EDA.csv  HR.csv  TEMP.csv   start timestamp, rate, one sample per line
    IBI.csv                     start timestamp, then ``offset,interval`` rows
    events.json                 array of rating / phase / distance records
    meta.json                   {"participant_id": ...}

Empty sample lines in channel files mark missing samples.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    AnxietyOutOfRange,
    DisjointTimeRanges,
    MalformedEvent,
    MalformedHeader,
    MalformedSample,
    MissingChannel,
    NonMonotonicOffset,
    NonPositiveInterval,
    OverlappingPhases,
)


class ChannelKind(str, enum.Enum):
    EDA = "EDA"
    HR = "HR"
    TEMP = "TEMP"
    EDA_FILTERED = "EDA_FILTERED"
    EDA_TONIC = "EDA_TONIC"
    EDA_PHASIC = "EDA_PHASIC"
    HRV_SDNN = "HRV_SDNN"
    HRV_RMSSD = "HRV_RMSSD"
    ANXIETY = "ANXIETY"
    DISTANCE = "DISTANCE"


REQUIRED_CHANNELS = (ChannelKind.EDA, ChannelKind.HR, ChannelKind.TEMP)


class Phase(str, enum.Enum):
    QUESTIONNAIRE = "Questionnaire"
    WALK_BAT = "WalkBat"
    VR_WALK_BAT = "VrWalkBat"
    TABLE_BAT = "TableBat"
    VR_TABLE_BAT = "VrTableBat"

    @property
    def is_bat(self) -> bool:
        return self is not Phase.QUESTIONNAIRE

    @property
    def is_walk(self) -> bool:
        return self in (Phase.WALK_BAT, Phase.VR_WALK_BAT)

    @property
    def is_vr(self) -> bool:
        return self in (Phase.VR_WALK_BAT, Phase.VR_TABLE_BAT)


BAT_PHASES = (Phase.WALK_BAT, Phase.VR_WALK_BAT, Phase.TABLE_BAT, Phase.VR_TABLE_BAT)


@dataclass(frozen=True, eq=False)
class TimeSeriesChannel:
    """Uniformly sampled signal; sample ``i`` sits at ``start_time + i / rate``."""

    kind: ChannelKind
    start_time: float
    rate: float
    values: np.ndarray
    missing: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        missing = (
            np.zeros(values.shape, dtype=bool)
            if self.missing is None
            else np.asarray(self.missing, dtype=bool)
        )
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise ValueError(f"rate must be positive, got {self.rate}")
        if values.ndim != 1 or values.size == 0:
            raise ValueError("channel values must be a non-empty 1-D array")
        if missing.shape != values.shape:
            raise ValueError("missing mask length differs from values length")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.values.size) / self.rate

    @property
    def end_time(self) -> float:
        return self.start_time + (self.values.size - 1) / self.rate

    def with_values(self, values, kind: ChannelKind | None = None, missing=None) -> "TimeSeriesChannel":
        return TimeSeriesChannel(
            kind if kind is not None else self.kind, self.start_time, self.rate, values, missing
        )


@dataclass(frozen=True, eq=False)
class IbiSeries:
    """Inter-beat intervals; ``offsets`` are beat times relative to ``start_time``."""

    start_time: float
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(0))
    intervals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        intervals = np.asarray(self.intervals, dtype=float).reshape(-1)
        if offsets.shape != intervals.shape:
            raise ValueError("offsets and intervals differ in length")
        if offsets.size > 1 and np.any(np.diff(offsets) <= 0):
            raise ValueError("IBI offsets must be strictly increasing")
        if np.any(intervals <= 0):
            raise ValueError("IBI intervals must be positive")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "intervals", intervals)

    def __len__(self) -> int:
        return self.offsets.size

    @property
    def beat_times(self) -> np.ndarray:
        return self.start_time + self.offsets


class EventKind(str, enum.Enum):
    RATING = "rating"
    PHASE_START = "phase_start"
    PHASE_END = "phase_end"
    DISTANCE = "distance"


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind
    value: float | None = None
    phase: Phase | None = None


@dataclass(frozen=True)
class EventTimeline:
    events: tuple[Event, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        _validate_timeline(self.events)

    def ratings(self) -> tuple[np.ndarray, np.ndarray]:
        rows = [(e.t, e.value) for e in self.events if e.kind is EventKind.RATING]
        if not rows:
            return np.zeros(0), np.zeros(0)
        t, v = zip(*rows)
        return np.asarray(t, dtype=float), np.asarray(v, dtype=float)

    def phase_intervals(self) -> list[tuple[Phase, float, float]]:
        out = []
        open_phase, open_t = None, None
        for e in self.events:
            if e.kind is EventKind.PHASE_START:
                open_phase, open_t = e.phase, e.t
            elif e.kind is EventKind.PHASE_END:
                out.append((open_phase, open_t, e.t))
                open_phase = None
        return out

    def distance_markers(self) -> tuple[np.ndarray, np.ndarray]:
        rows = [(e.t, e.value) for e in self.events if e.kind is EventKind.DISTANCE]
        if not rows:
            return np.zeros(0), np.zeros(0)
        t, v = zip(*rows)
        return np.asarray(t, dtype=float), np.asarray(v, dtype=float)

    @property
    def span(self) -> tuple[float, float]:
        return self.events[0].t, self.events[-1].t


def _validate_timeline(events: tuple[Event, ...], linenos: list[int] | None = None) -> None:
    def line(i):
        return linenos[i] if linenos is not None else None

    open_phase = None
    prev_t = -math.inf
    for i, e in enumerate(events):
        if e.t < prev_t:
            raise MalformedEvent("timestamps must be non-decreasing", line(i))
        prev_t = e.t
        if e.kind is EventKind.RATING:
            if e.value is None or not 0 <= e.value <= 100:
                raise AnxietyOutOfRange(f"anxiety rating {e.value} outside [0, 100]", line(i))
        elif e.kind is EventKind.DISTANCE:
            if e.value is None or not 0.0 <= e.value <= 1.0:
                raise MalformedEvent(f"distance fraction {e.value} outside [0, 1]", line(i))
        elif e.kind is EventKind.PHASE_START:
            if open_phase is not None:
                raise OverlappingPhases(
                    f"{e.phase.value} starts before {open_phase.value} ended", line(i)
                )
            open_phase = e.phase
        elif e.kind is EventKind.PHASE_END:
            if open_phase is not e.phase:
                raise OverlappingPhases(
                    f"{e.phase.value} ends but open phase is "
                    f"{open_phase.value if open_phase else 'none'}",
                    line(i),
                )
            open_phase = None
    if open_phase is not None:
        raise OverlappingPhases(f"{open_phase.value} never ends", line(len(events) - 1) if events else None)


@dataclass(frozen=True, eq=False)
class RawSession:
    participant_id: str
    channels: Mapping[ChannelKind, TimeSeriesChannel]
    ibi: IbiSeries
    timeline: EventTimeline
    common_range: tuple[float, float]


# --- parsing ---------------------------------------------------------------


def _parse_header_float(line: str, lineno: int, what: str) -> float:
    try:
        value = float(line)
    except ValueError:
        raise MalformedHeader(f"cannot parse {what} {line!r}", lineno) from None
    if not math.isfinite(value):
        raise MalformedHeader(f"{what} must be finite", lineno)
    return value


def _lines(text: str) -> list[str]:
    lines = text.split("\n")
    # A trailing LF terminates the last line rather than adding an empty sample.
    if lines and lines[-1] == "":
        lines.pop()
    return [ln.rstrip("\r") for ln in lines]


def parse_channel_file(text: str, kind: ChannelKind | str) -> TimeSeriesChannel:
    kind = ChannelKind(kind)
    lines = _lines(text)
    if len(lines) < 2:
        raise MalformedHeader("channel file needs a start timestamp and a sample rate", len(lines) + 1)
    start = _parse_header_float(lines[0].strip(), 1, "start timestamp")
    rate = _parse_header_float(lines[1].strip(), 2, "sample rate")
    if rate <= 0:
        raise MalformedHeader(f"sample rate must be positive, got {rate}", 2)
    body = lines[2:]
    if not body:
        raise MalformedSample("channel has no samples", 3)
    values = np.empty(len(body))
    missing = np.zeros(len(body), dtype=bool)
    for i, raw in enumerate(body):
        s = raw.strip()
        if not s:
            values[i] = np.nan
            missing[i] = True
            continue
        try:
            v = float(s)
        except ValueError:
            raise MalformedSample(f"non-numeric sample {s!r}", i + 3) from None
        if not math.isfinite(v):
            raise MalformedSample(f"non-finite sample {s!r}", i + 3)
        values[i] = v
    return TimeSeriesChannel(kind, start, rate, values, missing)


def parse_ibi_file(text: str) -> IbiSeries:
    lines = _lines(text)
    if not lines:
        raise MalformedHeader("IBI file needs a start timestamp", 1)
    start = _parse_header_float(lines[0].strip(), 1, "start timestamp")
    offsets, intervals = [], []
    for i, raw in enumerate(lines[1:], start=2):
        s = raw.strip()
        if not s:
            continue
        parts = s.split(",")
        if len(parts) != 2:
            raise MalformedSample(f"expected 'offset,interval', got {s!r}", i)
        try:
            off, ivl = float(parts[0]), float(parts[1])
        except ValueError:
            raise MalformedSample(f"non-numeric IBI row {s!r}", i) from None
        if not (math.isfinite(off) and math.isfinite(ivl)):
            raise MalformedSample(f"non-finite IBI row {s!r}", i)
        if offsets and off <= offsets[-1]:
            raise NonMonotonicOffset(f"offset {off} does not exceed previous {offsets[-1]}", i)
        if ivl <= 0:
            raise NonPositiveInterval(f"interval {ivl} is not positive", i)
        offsets.append(off)
        intervals.append(ivl)
    return IbiSeries(start, np.asarray(offsets, dtype=float), np.asarray(intervals, dtype=float))


def _iter_json_array(text: str):
    """Yield ``(lineno, obj)`` for each element of a top-level JSON array."""
    decoder = json.JSONDecoder()
    pos = 0
    n = len(text)

    def skip_ws(p):
        while p < n and text[p] in " \t\r\n":
            p += 1
        return p

    def lineno(p):
        return text.count("\n", 0, p) + 1

    pos = skip_ws(pos)
    if pos >= n or text[pos] != "[":
        raise MalformedEvent("events file must be a JSON array", lineno(pos))
    pos = skip_ws(pos + 1)
    if pos < n and text[pos] == "]":
        return
    while True:
        try:
            obj, end = decoder.raw_decode(text, pos)
        except json.JSONDecodeError as exc:
            raise MalformedEvent(f"invalid JSON: {exc.msg}", lineno(exc.pos)) from None
        yield lineno(pos), obj
        pos = skip_ws(end)
        if pos < n and text[pos] == ",":
            pos = skip_ws(pos + 1)
            continue
        if pos < n and text[pos] == "]":
            if skip_ws(pos + 1) != n:
                raise MalformedEvent("trailing content after array", lineno(pos + 1))
            return
        raise MalformedEvent("expected ',' or ']'", lineno(pos))


def _event_from_record(obj, lineno: int) -> Event:
    if not isinstance(obj, dict):
        raise MalformedEvent("event must be an object", lineno)
    try:
        kind = EventKind(obj.get("kind"))
    except ValueError:
        raise MalformedEvent(f"unknown event kind {obj.get('kind')!r}", lineno) from None
    t = obj.get("t")
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t):
        raise MalformedEvent(f"event timestamp {t!r} is not a finite number", lineno)
    value = obj.get("value")
    phase = None
    if kind in (EventKind.PHASE_START, EventKind.PHASE_END):
        try:
            phase = Phase(obj.get("phase"))
        except ValueError:
            raise MalformedEvent(f"unknown phase {obj.get('phase')!r}", lineno) from None
        if not phase.is_bat:
            raise MalformedEvent("only BAT phases are delimited by events", lineno)
        value = None
    else:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise MalformedEvent(f"event value {value!r} is not a finite number", lineno)
        if kind is EventKind.RATING:
            if not 0 <= value <= 100:
                raise AnxietyOutOfRange(f"anxiety rating {value} outside [0, 100]", lineno)
            if value != int(value):
                raise MalformedEvent(f"anxiety rating {value} is not an integer", lineno)
            value = int(value)
        value = float(value) if kind is EventKind.DISTANCE else value
    return Event(float(t), kind, value, phase)


def parse_events_file(text: str) -> EventTimeline:
    records = [(ln, _event_from_record(obj, ln)) for ln, obj in _iter_json_array(text)]
    records.sort(key=lambda r: r[1].t)  # stable: file order breaks timestamp ties
    events = tuple(e for _, e in records)
    _validate_timeline(events, [ln for ln, _ in records])
    return EventTimeline(events)


def assemble_session(
    participant_id: str,
    channels: Mapping[ChannelKind, TimeSeriesChannel],
    ibi: IbiSeries,
    timeline: EventTimeline,
) -> RawSession:
    channels = {ChannelKind(k): v for k, v in channels.items()}
    for kind in REQUIRED_CHANNELS:
        if kind not in channels:
            raise MissingChannel(f"session {participant_id!r} lacks channel {kind.value}")
    start = max(ch.start_time for ch in channels.values())
    end = min(ch.end_time for ch in channels.values())
    if not end > start:
        raise DisjointTimeRanges(f"channel time ranges do not overlap (common [{start}, {end}])")
    if timeline.events:
        t_lo, t_hi = timeline.span
        if t_hi < start or t_lo > end:
            raise DisjointTimeRanges("event timeline lies outside the common channel range")
    if len(ibi):
        b = ibi.beat_times
        if b[-1] < start or b[0] > end:
            raise DisjointTimeRanges("IBI events lie outside the common channel range")
    return RawSession(participant_id, channels, ibi, timeline, (float(start), float(end)))


# --- serialization ---------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def format_channel(channel: TimeSeriesChannel) -> str:
    lines = [_fmt(channel.start_time), _fmt(channel.rate)]
    lines.extend("" if m else _fmt(v) for v, m in zip(channel.values, channel.missing))
    return "\n".join(lines) + "\n"


def format_ibi(ibi: IbiSeries) -> str:
    lines = [_fmt(ibi.start_time)]
    lines.extend(f"{_fmt(o)},{_fmt(i)}" for o, i in zip(ibi.offsets, ibi.intervals))
    return "\n".join(lines) + "\n"


def event_record(e: Event) -> dict:
    rec: dict = {"t": e.t, "kind": e.kind.value}
    if e.phase is not None:
        rec["phase"] = e.phase.value
    if e.value is not None:
        rec["value"] = e.value
    return rec


def format_events(events: Iterable[Event]) -> str:
    rows = [json.dumps(event_record(e)) for e in events]
    if not rows:
        return "[]\n"
    return "[\n" + ",\n".join(rows) + "\n]\n"


CHANNEL_FILES = {ChannelKind.EDA: "EDA.csv", ChannelKind.HR: "HR.csv", ChannelKind.TEMP: "TEMP.csv"}


def write_session_dir(path: str | Path, session: RawSession) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for kind, name in CHANNEL_FILES.items():
        (path / name).write_text(format_channel(session.channels[kind]), encoding="utf-8")
    (path / "IBI.csv").write_text(format_ibi(session.ibi), encoding="utf-8")
    (path / "events.json").write_text(format_events(session.timeline.events), encoding="utf-8")
    meta = json.dumps({"participant_id": session.participant_id}) + "\n"
    (path / "meta.json").write_text(meta, encoding="utf-8")


def load_session_dir(path: str | Path) -> RawSession:
    """Parse and assemble one session directory. Raises ``OSError`` for unreadable files."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
    pid = str(meta["participant_id"])
    channels = {}
    for kind, name in CHANNEL_FILES.items():
        fp = path / name
        if fp.exists():
            channels[kind] = parse_channel_file(fp.read_text(encoding="utf-8"), kind)
    ibi = parse_ibi_file((path / "IBI.csv").read_text(encoding="utf-8"))
    timeline = parse_events_file((path / "events.json").read_text(encoding="utf-8"))
    return assemble_session(pid, channels, ibi, timeline)


def find_sessions(corpus_dir: str | Path) -> list[Path]:
    """Session directories (those holding a ``meta.json``) in sorted order."""
    corpus_dir = Path(corpus_dir)
    return sorted(p.parent for p in corpus_dir.glob("*/meta.json"))
