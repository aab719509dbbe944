import json

import numpy as np
import pytest

from wearable_anxiety.session import ChannelKind, EventKind, find_sessions, load_session_dir
from wearable_anxiety.synth import (
    ANTICIPATION_RAMP,
    Coupling,
    Noise,
    SynthConfig,
    generate_corpus,
    generate_latent,
    generate_participant,
    participant_seed,
    rating_schedule,
    regenerate_from_manifest,
    synthesize_signals,
)
from wearable_anxiety.session import Phase


SEEDS = range(20)


@pytest.mark.parametrize("seed", SEEDS)
def test_latent_trace_properties(seed):
    lt = generate_latent(seed)
    a = lt.anxiety
    t = lt.times
    assert np.all((a >= 0) & (a <= 100))
    assert np.max(np.abs(np.diff(a))) <= 20
    bat = lt.phase_at(t) != Phase.QUESTIONNAIRE.value
    assert a[bat].mean() > a[~bat].mean()
    # away from anticipation and recovery the questionnaire level stays low
    calm = ~bat
    for b in lt.bats:
        calm &= ~((t > b.start - ANTICIPATION_RAMP) & (t < b.end + 6 * b.recovery))
    assert a[calm].max() < 10
    for b in lt.bats:
        assert 60 <= b.peak <= 95
        d = lt.distance_at(t[(t >= b.start) & (t < b.end)])
        assert d[0] == 0 and np.all(np.diff(d) >= 0) and d[-1] <= 1


def test_latent_is_deterministic():
    a, b = generate_latent(5), generate_latent(5)
    assert np.array_equal(a.anxiety, b.anxiety)
    assert not np.array_equal(a.anxiety, generate_latent(6).anxiety)


def test_ratings_follow_schedule():
    s = generate_participant(SynthConfig(n_participants=1, seed=2), 0)
    t0 = s.session.channels[ChannelKind.EDA].start_time
    rt, rv = s.session.timeline.ratings()
    sched = rating_schedule(s.latent)
    assert len(rt) == len(sched)
    for (ts, _), t, v in zip(sched, rt, rv):
        assert t == t0 + ts
        assert v == np.round(float(s.latent.anxiety_at(ts)))


def test_decoupled_silent_session():
    zero = Coupling(hr_gain=0, eda_tonic_gain=0, scr_rate_base=0, scr_rate_gain=0, temp_gain=0, temp_drift=0,
                    rmssd_gain=0)
    lt = generate_latent(1)
    s = synthesize_signals(lt, 1, zero, Noise.silent())
    hr = s.session.channels[ChannelKind.HR].values
    assert np.all(hr == hr[0])
    eda = s.session.channels[ChannelKind.EDA]
    assert s.scr_onsets.size == 0
    slope, icpt = np.polyfit(eda.times - eda.start_time, eda.values, 1)
    resid = eda.values - (icpt + slope * (eda.times - eda.start_time))
    assert np.max(np.abs(resid)) <= 1e-4


def test_hr_monotone_in_anxiety_without_noise():
    lt = generate_latent(4)
    s = synthesize_signals(lt, 4, noise=Noise.silent())
    hr = s.session.channels[ChannelKind.HR].values
    a = lt.anxiety_at(np.arange(hr.size, dtype=float))
    idx = np.random.default_rng(0).integers(0, hr.size, (4000, 2))
    i, j = idx[:, 0], idx[:, 1]
    sel = a[i] > a[j] + 10
    assert sel.sum() > 100
    assert np.all(hr[i[sel]] > hr[j[sel]])


def test_scr_count_matches_poisson_expectation():
    total, expected = 0, 0.0
    for seed in SEEDS:
        s = synthesize_signals(generate_latent(seed), seed)
        total += s.scr_onsets.size
        expected += s.expected_scr
    assert abs(total - expected) <= 3 * np.sqrt(expected)


def test_plausibility_bounds_and_artifacts():
    s = generate_participant(SynthConfig(n_participants=1, seed=8), 0)
    ch = s.session.channels
    ok = lambda c: c.values[~c.missing]
    assert np.all((ok(ch[ChannelKind.HR]) >= 45) & (ok(ch[ChannelKind.HR]) <= 180))
    assert np.all(ok(ch[ChannelKind.EDA]) >= 0)
    assert np.all((ok(ch[ChannelKind.TEMP]) >= 28) & (ok(ch[ChannelKind.TEMP]) <= 37))
    assert np.any(s.session.ibi.intervals < 0.3)
    assert ch[ChannelKind.EDA].missing.any()


def test_config_validation_and_seed_rule():
    with pytest.raises(ValueError):
        SynthConfig(script=(("Questionnaire", 300), ("WalkBat", 120)))
    with pytest.raises(ValueError):
        SynthConfig(script=(("Questionnaire", -1),) + SynthConfig().script[1:])
    cfg = SynthConfig(n_participants=3, seed=9)
    assert SynthConfig.from_json(cfg.to_json()) == cfg
    assert participant_seed(7, 0) != participant_seed(7, 1)
    assert participant_seed(7, 0) == participant_seed(7, 0)


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_corpus_determinism_and_regeneration(tmp_path):
    cfg = SynthConfig(n_participants=2, seed=7)
    manifest = generate_corpus(cfg, tmp_path / "a")
    generate_corpus(cfg, tmp_path / "b")
    regenerate_from_manifest(manifest, tmp_path / "c")
    a = _tree_bytes(tmp_path / "a")
    assert a == _tree_bytes(tmp_path / "b") == _tree_bytes(tmp_path / "c")
    doc = json.loads(manifest.read_text())
    assert [p["seed"] for p in doc["participants"]] == [participant_seed(7, i) for i in range(2)]
    assert "scaffolding" in doc["note"]
    assert (tmp_path / "a" / "ground_truth" / "P01.csv").exists()
    sessions = find_sessions(tmp_path / "a")
    assert [p.name for p in sessions] == ["P01", "P02"]
    for p in sessions:
        s = load_session_dir(p)
        kinds = {e.kind for e in s.timeline.events}
        assert {EventKind.RATING, EventKind.PHASE_START, EventKind.DISTANCE} <= kinds
