import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearable_anxiety.errors import (
    AllMissing,
    EmptyChannel,
    GapTooLong,
    NoRatings,
    NoValidWindows,
    StageError,
)
from wearable_anxiety.preprocess import (
    GRID_COLUMNS,
    SessionGrid,
    TimeGrid,
    build_session_grid,
    clean_ibi,
    decompose_eda,
    hrv_sliding,
    interpolate_gaps,
    interpolate_labels,
    read_grid_csv,
    resample_to_4hz,
    write_grid_csv,
)
from wearable_anxiety.session import (
    ChannelKind,
    Event,
    EventKind,
    EventTimeline,
    IbiSeries,
    Phase,
    RawSession,
    TimeSeriesChannel,
)
from wearable_anxiety.synth import SynthConfig, generate_participant


def chan(values, rate=4.0, start=0.0, kind=ChannelKind.EDA):
    arr = np.array([np.nan if v is None else v for v in values], dtype=float)
    return TimeSeriesChannel(kind, start, rate, arr, np.isnan(arr))


def test_interpolate_gaps_examples():
    np.testing.assert_array_equal(interpolate_gaps(chan([1, None, 3]), 1).values, [1, 2, 3])
    out = interpolate_gaps(chan([None, 5, 5]), 1)
    np.testing.assert_array_equal(out.values, [5, 5, 5])
    assert not out.missing.any()
    with pytest.raises(GapTooLong) as exc:
        interpolate_gaps(chan([1, None, None, 4]), 1)
    assert exc.value.start == 0.25 and exc.value.end == 0.5
    with pytest.raises(AllMissing):
        interpolate_gaps(chan([None, None]), 4)


def test_decompose_constant_and_reconstruction():
    tonic, phasic = decompose_eda(np.full(2000, 3.0), 4.0)
    assert np.max(np.abs(phasic)) < 1e-6
    np.testing.assert_allclose(tonic, 3.0, atol=1e-6)
    x = np.random.default_rng(1).standard_normal(3000).cumsum()
    tonic, phasic = decompose_eda(x, 4.0)
    assert np.max(np.abs((tonic + phasic) - x)) <= 4 * np.finfo(float).eps * np.max(np.abs(x))


def test_decompose_separates_ramp_and_bump():
    rate = 4.0
    t = np.arange(0, 600, 1 / rate)
    ramp = 1.0 + t / 600.0
    s = np.clip(t - 300.0, 0, None)
    shape = np.exp(-s / 2.0) - np.exp(-s / 0.75)
    bump = 0.5 * shape / shape.max()
    tonic, phasic = decompose_eda(ramp + bump, rate)
    # SCR amplitude is read trough-to-peak: the high-pass swings the local baseline negative
    near = (t > 280) & (t < 330)
    assert abs(phasic[near].max() - phasic[near].min() - 0.5) <= 0.15 * 0.5
    for i in (0, -1):
        assert abs(tonic[i] - ramp[i]) <= 0.1 * ramp[i]


def test_clean_ibi_examples():
    mk = lambda iv: IbiSeries(0.0, np.arange(1, len(iv) + 1, dtype=float), np.asarray(iv, dtype=float))
    assert clean_ibi(mk([0.8, 0.25, 0.9])).intervals.tolist() == [0.8, 0.9]
    assert clean_ibi(mk([0.8, 0.25, 0.9])).offsets.tolist() == [1.0, 3.0]
    assert clean_ibi(mk([2.5])).intervals.tolist() == []
    assert clean_ibi(mk([0.3, 2.0])).intervals.tolist() == [0.3, 2.0]
    once = clean_ibi(mk([0.1, 0.5, 3.0, 1.0]))
    twice = clean_ibi(once)
    np.testing.assert_array_equal(once.intervals, twice.intervals)


def test_hrv_examples():
    grid = TimeGrid(3.0, 1)
    ibi = IbiSeries(0.0, np.array([1.0, 2.0, 3.0]), np.array([0.80, 0.81, 0.79]))
    sdnn, rmssd = hrv_sliding(ibi, grid)
    assert math.isclose(sdnn.values[0], 10.0, rel_tol=1e-9)
    assert math.isclose(rmssd.values[0], math.sqrt((10**2 + 20**2) / 2), rel_tol=1e-9)
    const = IbiSeries(0.0, np.array([1.0, 2.0, 3.0]), np.full(3, 0.8))
    s, r = hrv_sliding(const, grid)
    assert s.values[0] == 0.0 and r.values[0] == 0.0


def test_hrv_invalid_windows_take_nearest_value():
    ibi = IbiSeries(0.0, np.array([0.5, 1.0, 1.6]), np.array([0.5, 0.5, 0.6]))
    grid = TimeGrid(0.0, 8)  # t = 0 .. 1.75
    sdnn, _ = hrv_sliding(ibi, grid)
    first_valid = 4  # t = 1.0 is the first window with two beats
    assert np.all(sdnn.values[:first_valid] == sdnn.values[first_valid])
    with pytest.raises(NoValidWindows):
        hrv_sliding(IbiSeries(0.0, np.array([1.0]), np.array([0.8])), grid)


def brute_hrv(beats, iv, times, window):
    sd, rm = np.full(times.size, np.nan), np.full(times.size, np.nan)
    for k, t in enumerate(times):
        sel = (beats > t - window) & (beats <= t)
        w = iv[sel] * 1000.0
        if w.size >= 2:
            sd[k] = np.std(w, ddof=1)
            d = np.diff(w)
            rm[k] = np.sqrt(np.mean(d * d))
    valid = np.isfinite(sd)
    idx = np.arange(times.size)
    good = idx[valid]
    src = np.array([good[np.argmin(np.abs(good - i))] for i in idx])  # argmin picks the earlier on ties
    return sd[src], rm[src]


@pytest.mark.parametrize("seed", range(25))
def test_hrv_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 200))
    iv = rng.uniform(0.3, 1.5, n)
    beats = np.cumsum(iv) + rng.uniform(0, 5)
    ibi = IbiSeries(0.0, beats, iv)
    window = float(rng.choice([5.0, 20.0, 300.0]))
    grid = TimeGrid(0.0, int(beats[-1] * 4) + 10)
    sd, rm = hrv_sliding(ibi, grid, window)
    bsd, brm = brute_hrv(beats, iv, grid.times, window)
    np.testing.assert_array_equal(sd.values, bsd)
    np.testing.assert_array_equal(rm.values, brm)


def test_resample_examples():
    out = resample_to_4hz(TimeSeriesChannel(ChannelKind.HR, 0.0, 1.0, np.array([10.0, 20.0])), TimeGrid(0.0, 5))
    np.testing.assert_array_equal(out.values, [10, 12.5, 15, 17.5, 20])
    c = chan([2.0] * 9)
    np.testing.assert_array_equal(resample_to_4hz(c, TimeGrid(0.0, 9)).values, c.values)
    with pytest.raises(EmptyChannel):
        resample_to_4hz(chan([None, None]), TimeGrid(0.0, 3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.floats(-3, 3))
def test_resample_has_no_overshoot(values, offset):
    ch = TimeSeriesChannel(ChannelKind.TEMP, 0.0, 1.0, np.array(values))
    out = resample_to_4hz(ch, TimeGrid(offset, 4 * len(values) + 20))
    assert out.values.min() >= min(values) and out.values.max() <= max(values)


def _timeline(events):
    return EventTimeline(tuple(Event(*e) for e in events))


def test_interpolate_labels_examples():
    tl = _timeline([
        (0.0, EventKind.RATING, 20),
        (0.0, EventKind.PHASE_START, None, Phase.WALK_BAT),
        (0.0, EventKind.DISTANCE, 0.0),
        (8.0, EventKind.DISTANCE, 0.25),
        (10.0, EventKind.RATING, 40),
        (12.0, EventKind.PHASE_END, None, Phase.WALK_BAT),
    ])
    grid = TimeGrid(0.0, 61)  # 0 .. 15 s
    anx, dist, dvalid, phase = interpolate_labels(tl, grid)
    assert anx[20] == 30.0 and anx[60] == 40.0
    assert dist[16] == 0.125
    assert phase[0] == "WalkBat" and phase[48] == "Questionnaire" and not dvalid[48]
    assert np.all(np.isfinite(anx))
    with pytest.raises(NoRatings):
        interpolate_labels(_timeline([]), grid)


@pytest.fixture(scope="module")
def synth_session():
    return generate_participant(SynthConfig(n_participants=1, seed=3), 0).session


def test_build_session_grid_structure(synth_session, tmp_path):
    grid = build_session_grid(synth_session, debug_dir=tmp_path / "dbg")
    lo, hi = synth_session.common_range
    assert len(grid) == math.ceil((hi - lo) * 4 - 1e-9) + 1
    assert set(grid.columns) == set(GRID_COLUMNS)
    assert all(c.size == len(grid) for c in grid.columns.values())
    assert np.all(np.isfinite(grid["anxiety"]))
    assert np.array_equal(np.isfinite(grid["distance"]), grid.is_bat)
    for stage in ("gaps", "lowpass", "decompose", "ibi", "hrv", "resample", "labels"):
        assert any((tmp_path / "dbg" / stage).iterdir())
    assert (tmp_path / "dbg" / "decompose" / "EDA_TONIC.csv").exists()


def test_grid_csv_round_trip(synth_session, tmp_path):
    grid = build_session_grid(synth_session)
    write_grid_csv(grid, tmp_path / "g.csv")
    back = read_grid_csv(tmp_path / "g.csv")
    assert back.participant_id == grid.participant_id and back.t0 == grid.t0
    np.testing.assert_array_equal(back.phase, grid.phase)
    for c in GRID_COLUMNS:
        np.testing.assert_array_equal(back[c], grid[c])


def _replace(session, channels=None, ibi=None):
    return RawSession(session.participant_id, channels or session.channels, ibi or session.ibi,
                      session.timeline, session.common_range)


def test_all_artifact_ibi_fails_in_hrv_stage(synth_session):
    ibi = synth_session.ibi
    bad = IbiSeries(ibi.start_time, ibi.offsets, np.full(ibi.offsets.size, 0.2))
    with pytest.raises(StageError) as exc:
        build_session_grid(_replace(synth_session, ibi=bad))
    assert exc.value.stage == "hrv"
    assert isinstance(exc.value.cause, NoValidWindows)


def test_single_sample_gap_equals_prefilled(synth_session):
    eda = synth_session.channels[ChannelKind.EDA]
    filled = interpolate_gaps(eda, 4).values
    filled[5000] = 0.5 * (filled[4999] + filled[5001])
    gap_values = filled.copy()
    gap_mask = np.zeros(filled.size, dtype=bool)
    gap_mask[5000] = True
    gap_values[5000] = np.nan
    chans = dict(synth_session.channels)
    chans[ChannelKind.EDA] = eda.with_values(gap_values, missing=gap_mask)
    with_gap = build_session_grid(_replace(synth_session, chans))
    chans[ChannelKind.EDA] = eda.with_values(filled)
    prefilled = build_session_grid(_replace(synth_session, chans))
    for c in GRID_COLUMNS:
        np.testing.assert_array_equal(with_gap[c], prefilled[c])


def test_session_grid_rejects_ragged_columns():
    with pytest.raises(ValueError):
        SessionGrid("P", 0.0, {"hr": np.zeros(3)}, np.array(["Questionnaire"] * 4))
