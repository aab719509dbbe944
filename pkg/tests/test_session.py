import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearable_anxiety.errors import (
    AnxietyOutOfRange,
    DisjointTimeRanges,
    MalformedEvent,
    MalformedHeader,
    MalformedSample,
    MissingChannel,
    NonMonotonicOffset,
    NonPositiveInterval,
    OverlappingPhases,
    ParseError,
)
from wearable_anxiety.session import (
    ChannelKind,
    EventKind,
    IbiSeries,
    Phase,
    TimeSeriesChannel,
    assemble_session,
    format_channel,
    format_events,
    load_session_dir,
    parse_channel_file,
    parse_events_file,
    parse_ibi_file,
    write_session_dir,
)


def test_channel_basic():
    ch = parse_channel_file("100.0\n4.0\n0.5\n0.6\n", "EDA")
    assert ch.start_time == 100.0 and ch.rate == 4.0
    np.testing.assert_array_equal(ch.values, [0.5, 0.6])
    assert not ch.missing.any()
    np.testing.assert_array_equal(ch.times, [100.0, 100.25])


def test_channel_missing_sample():
    ch = parse_channel_file("100.0\n4.0\n0.5\n\n0.7\n", ChannelKind.EDA)
    assert ch.values[0] == 0.5 and ch.values[2] == 0.7
    np.testing.assert_array_equal(ch.missing, [False, True, False])


@pytest.mark.parametrize("text", ["100.0\n0.0\n0.5\n", "100.0\n-1\n0.5\n", "abc\n4\n1\n", "100.0\n"])
def test_channel_bad_header(text):
    with pytest.raises(MalformedHeader) as exc:
        parse_channel_file(text, "HR")
    assert exc.value.lineno is not None


def test_channel_bad_sample_reports_line():
    with pytest.raises(MalformedSample) as exc:
        parse_channel_file("100.0\n1.0\n60\nsixty\n", "HR")
    assert exc.value.lineno == 4
    assert "line 4" in str(exc.value)


def test_ibi_parsing():
    ibi = parse_ibi_file("100.0\n1.0,0.8\n1.8,0.8\n")
    np.testing.assert_array_equal(ibi.offsets, [1.0, 1.8])
    np.testing.assert_array_equal(ibi.beat_times, [101.0, 101.8])
    assert len(parse_ibi_file("100.0\n")) == 0
    with pytest.raises(NonMonotonicOffset) as exc:
        parse_ibi_file("100.0\n2.0,0.8\n1.0,0.8\n")
    assert exc.value.lineno == 3
    with pytest.raises(NonPositiveInterval):
        parse_ibi_file("100.0\n1.0,0.0\n")
    with pytest.raises(MalformedHeader):
        parse_ibi_file("")


def _events(*recs):
    return "[\n" + ",\n".join(json.dumps(r) for r in recs) + "\n]\n"


def test_events_valid():
    tl = parse_events_file(_events(
        {"t": 200, "kind": "phase_start", "phase": "WalkBat"},
        {"t": 210, "kind": "rating", "value": 40},
        {"t": 260, "kind": "phase_end", "phase": "WalkBat"},
    ))
    assert len(tl.events) == 3
    assert tl.phase_intervals() == [(Phase.WALK_BAT, 200.0, 260.0)]
    t, v = tl.ratings()
    assert t.tolist() == [210.0] and v.tolist() == [40.0]


def test_events_sorted_by_time():
    tl = parse_events_file(_events({"t": 5, "kind": "rating", "value": 1}, {"t": 1, "kind": "rating", "value": 2}))
    assert [e.t for e in tl.events] == [1.0, 5.0]


def test_events_errors():
    with pytest.raises(AnxietyOutOfRange) as exc:
        parse_events_file(_events({"t": 1, "kind": "rating", "value": 3}, {"t": 210, "kind": "rating", "value": 150}))
    assert exc.value.lineno == 3
    with pytest.raises(OverlappingPhases):
        parse_events_file(_events(
            {"t": 200, "kind": "phase_start", "phase": "WalkBat"},
            {"t": 230, "kind": "phase_start", "phase": "TableBat"},
            {"t": 260, "kind": "phase_end", "phase": "WalkBat"},
            {"t": 270, "kind": "phase_end", "phase": "TableBat"},
        ))
    with pytest.raises(MalformedEvent):
        parse_events_file('{"t": 1}')
    with pytest.raises(MalformedEvent):
        parse_events_file(_events({"t": 1, "kind": "sneeze", "value": 1}))
    with pytest.raises(MalformedEvent):
        parse_events_file(_events({"t": 1, "kind": "rating", "value": 12.5}))
    with pytest.raises(MalformedEvent):
        parse_events_file("[\n{\"t\": 1, \"kind\": \"rating\", \"value\": 1},\n{oops}\n]")


def test_every_parse_error_has_line_number():
    bad = [
        lambda: parse_channel_file("1\n1\nx\n", "HR"),
        lambda: parse_ibi_file("1\n1,1\n1,1\n"),
        lambda: parse_events_file("[{\"t\": 1, \"kind\": \"rating\", \"value\": 101}]"),
        lambda: parse_events_file("[\n{\"t\": 1, \"kind\": \"phase_start\", \"phase\": \"TableBat\"}\n]"),
    ]
    for fn in bad:
        with pytest.raises(ParseError) as exc:
            fn()
        assert isinstance(exc.value.lineno, int)


def _chan(kind, start, end, rate=1.0):
    n = int(round((end - start) * rate)) + 1
    return TimeSeriesChannel(kind, start, rate, np.ones(n))


def test_assemble_common_range():
    chans = {k: _chan(k, 100, 4000) for k in (ChannelKind.EDA, ChannelKind.HR, ChannelKind.TEMP)}
    tl = parse_events_file(_events({"t": 500, "kind": "rating", "value": 5}))
    s = assemble_session("P1", chans, IbiSeries(100.0), tl)
    assert s.common_range == (100.0, 4000.0)


def test_assemble_errors():
    tl = parse_events_file("[]")
    with pytest.raises(DisjointTimeRanges):
        assemble_session("P", {ChannelKind.HR: _chan(ChannelKind.HR, 100, 200),
                               ChannelKind.EDA: _chan(ChannelKind.EDA, 300, 400),
                               ChannelKind.TEMP: _chan(ChannelKind.TEMP, 100, 400)}, IbiSeries(0.0), tl)
    with pytest.raises(MissingChannel):
        assemble_session("P", {ChannelKind.HR: _chan(ChannelKind.HR, 100, 200),
                               ChannelKind.EDA: _chan(ChannelKind.EDA, 100, 200)}, IbiSeries(0.0), tl)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    start=st.floats(0, 2e9, allow_nan=False),
    rate=st.floats(0.01, 1000, allow_nan=False),
    values=st.lists(st.one_of(finite, st.none()), min_size=1, max_size=40),
)
def test_channel_round_trip(start, rate, values):
    arr = np.array([np.nan if v is None else v for v in values])
    ch = TimeSeriesChannel(ChannelKind.TEMP, start, rate, arr, np.isnan(arr))
    back = parse_channel_file(format_channel(ch), "TEMP")
    assert back.start_time == start and back.rate == rate
    np.testing.assert_array_equal(back.missing, ch.missing)
    np.testing.assert_array_equal(back.values[~back.missing], arr[~ch.missing])


@settings(max_examples=40, deadline=None)
@given(
    ratings=st.lists(st.tuples(st.floats(0, 1000, allow_nan=False), st.integers(0, 100)), max_size=12),
    bats=st.lists(st.floats(1, 50, allow_nan=False), max_size=4),
)
def test_random_timelines_parse_and_satisfy_invariants(ratings, bats):
    recs = [{"t": t, "kind": "rating", "value": v} for t, v in ratings]
    at = 1100.0
    for phase, dur in zip(("WalkBat", "VrWalkBat", "TableBat", "VrTableBat"), bats):
        recs.append({"t": at, "kind": "phase_start", "phase": phase})
        recs.append({"t": at + dur / 2, "kind": "distance", "value": 0.5})
        recs.append({"t": at + dur, "kind": "phase_end", "phase": phase})
        at += dur + 1
    tl = parse_events_file(_events(*recs) if recs else "[]")
    ts = [e.t for e in tl.events]
    assert ts == sorted(ts)
    assert all(0 <= e.value <= 100 for e in tl.events if e.kind is EventKind.RATING)
    assert parse_events_file(format_events(tl.events)).events == tl.events


def test_session_directory_round_trip(tmp_path):
    chans = {k: _chan(k, 100, 300, 4.0 if k is ChannelKind.EDA else 1.0)
             for k in (ChannelKind.EDA, ChannelKind.HR, ChannelKind.TEMP)}
    tl = parse_events_file(_events({"t": 150.5, "kind": "rating", "value": 7}))
    ibi = IbiSeries(100.0, np.array([1.0, 1.9]), np.array([0.9, 0.9]))
    s = assemble_session("P9", chans, ibi, tl)
    write_session_dir(tmp_path / "P9", s)
    back = load_session_dir(tmp_path / "P9")
    assert back.participant_id == "P9"
    assert back.common_range == s.common_range
    assert back.timeline.events == tl.events
    np.testing.assert_array_equal(back.ibi.offsets, ibi.offsets)
    assert math.isclose(back.channels[ChannelKind.EDA].rate, 4.0)
