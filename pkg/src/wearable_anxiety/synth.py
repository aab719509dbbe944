"""Deterministic synthetic sessions driven by a known latent anxiety trace.

Everything here is test scaffolding: the couplings between anxiety and each
signal are invented so that the pipeline has something learnable to recover.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .session import (
    BAT_PHASES,
    ChannelKind,
    Event,
    EventKind,
    EventTimeline,
    IbiSeries,
    Phase,
    RawSession,
    TimeSeriesChannel,
    assemble_session,
    write_session_dir,
)

SCAFFOLD_NOTE = "synthetic data: signal couplings are test scaffolding, not physiological claims"

DEFAULT_SCRIPT = (
    (Phase.QUESTIONNAIRE, 300.0),
    (Phase.WALK_BAT, 120.0),
    (Phase.QUESTIONNAIRE, 300.0),
    (Phase.VR_WALK_BAT, 120.0),
    (Phase.QUESTIONNAIRE, 300.0),
    (Phase.TABLE_BAT, 120.0),
    (Phase.QUESTIONNAIRE, 300.0),
    (Phase.VR_TABLE_BAT, 120.0),
    (Phase.QUESTIONNAIRE, 300.0),
)

# offsets (s) of the pre- and post-BAT ratings relative to phase start / end
EXPLANATION_LEAD = 90.0
ANTICIPATION_LEAD = 10.0
EXIT_DELAY = 30.0
ANTICIPATION_RAMP = 30.0


@dataclass(frozen=True)
class Coupling:
    hr_gain: float = 22.0          # bpm per unit anxiety
    eda_tonic_gain: float = 1.5    # uS per unit anxiety
    eda_lag: float = 8.0           # s, first-order lag of the tonic response
    scr_rate_base: float = 1 / 30  # SCR onsets per s at zero anxiety
    scr_rate_gain: float = 0.1     # extra onsets per s per unit anxiety
    scr_amplitude: float = 0.25    # uS, mean SCR amplitude
    scr_rise: float = 0.75         # s
    scr_decay: float = 2.0         # s
    temp_gain: float = 0.4         # degC drop per unit anxiety
    temp_drift: float = 0.6        # degC drop over the session
    rmssd_gain: float = 0.5        # fraction of beat jitter removed at full anxiety


@dataclass(frozen=True)
class Noise:
    hr_phi: float = 0.97
    hr_sigma: float = 1.2          # bpm innovation s.d.
    eda_sigma: float = 0.01        # uS
    eda_wander: float = 0.35       # uS, slow vasomotor wander (20-40 s periods) in the tonic level
    temp_sigma: float = 0.02       # degC
    ibi_jitter: float = 0.025      # s
    artifact_rate: float = 0.02    # fraction of beats with an injected artefact
    missing_rate: float = 0.002    # per-sample probability of a dropped sample

    @classmethod
    def silent(cls) -> "Noise":
        return cls(hr_sigma=0.0, eda_sigma=0.0, eda_wander=0.0, temp_sigma=0.0, ibi_jitter=0.0,
                   artifact_rate=0.0, missing_rate=0.0)


@dataclass(frozen=True)
class SynthConfig:
    n_participants: int = 23
    seed: int = 7
    script: tuple = DEFAULT_SCRIPT
    coupling: Coupling = field(default_factory=Coupling)
    noise: Noise = field(default_factory=Noise)
    start_time: float = 1_600_000_000.0

    def __post_init__(self):
        script = tuple((Phase(p), float(d)) for p, d in self.script)
        object.__setattr__(self, "script", script)
        if any(d <= 0 for _, d in script):
            raise ValueError("script durations must be positive")
        bats = [p for p, _ in script if p.is_bat]
        if sorted(b.value for b in bats) != sorted(b.value for b in BAT_PHASES):
            raise ValueError("script must contain each BAT phase exactly once")

    def to_json(self) -> dict:
        return {
            "n_participants": self.n_participants,
            "seed": self.seed,
            "script": [[p.value, d] for p, d in self.script],
            "coupling": asdict(self.coupling),
            "noise": asdict(self.noise),
            "start_time": self.start_time,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SynthConfig":
        return cls(
            n_participants=int(doc["n_participants"]),
            seed=int(doc["seed"]),
            script=tuple((Phase(p), float(d)) for p, d in doc["script"]),
            coupling=Coupling(**doc.get("coupling", {})),
            noise=Noise(**doc.get("noise", {})),
            start_time=float(doc.get("start_time", 1_600_000_000.0)),
        )


def participant_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


# --- latent trace ----------------------------------------------------------


@dataclass(frozen=True)
class BatPlan:
    phase: Phase
    start: float
    end: float
    approach: float        # seconds from start until the final distance is reached
    stop_remaining: float  # remaining distance fraction at the stop point
    anticipation: float    # anxiety level reached at phase start
    peak: float            # anxiety at the stop point
    shape: float           # exponent of the approach curve
    recovery: float        # decay time constant after the phase ends, s

    @property
    def covered_final(self) -> float:
        return 1.0 - self.stop_remaining

    def covered_at(self, t):
        t = np.asarray(t, dtype=float)
        prog = np.clip((t - self.start) / self.approach, 0.0, 1.0)
        return self.covered_final * prog

    def time_of_covered(self, fraction: float) -> float:
        return self.start + self.approach * fraction / self.covered_final


@dataclass(frozen=True)
class LatentTrace:
    """Ground-truth anxiety ``A(t)`` on ``[0, duration]``, seconds from session start."""

    duration: float
    script: tuple
    bats: tuple[BatPlan, ...]
    base_level: float
    base_waves: np.ndarray  # rows of (amplitude, period, phase)
    rate: float = 4.0

    @property
    def times(self) -> np.ndarray:
        return np.arange(int(round(self.duration * self.rate)) + 1) / self.rate

    def baseline_at(self, t):
        t = np.asarray(t, dtype=float)
        wave = np.zeros_like(t)
        for amp, period, ph in self.base_waves:
            wave = wave + amp * np.sin(2 * np.pi * t / period + ph)
        return np.clip(self.base_level + wave, 0.0, 8.0)

    def anxiety_at(self, t):
        t = np.asarray(t, dtype=float)
        base = self.baseline_at(t)
        extra = np.zeros_like(t)
        for b in self.bats:
            ramp_from = b.start - ANTICIPATION_RAMP
            u = np.clip((t - ramp_from) / ANTICIPATION_RAMP, 0.0, 1.0)
            pre = b.anticipation * u * u * (3 - 2 * u)
            prog = np.clip((t - b.start) / b.approach, 0.0, 1.0)
            during = b.anticipation + (b.peak - b.anticipation) * prog**b.shape
            level_end = b.peak
            after = level_end * np.exp(-np.maximum(t - b.end, 0.0) / b.recovery)
            contrib = np.where(t < b.start, pre, np.where(t < b.end, during, after))
            extra = np.maximum(extra, contrib)
        return np.clip(base + extra, 0.0, 100.0)

    def distance_at(self, t):
        """Covered distance fraction inside BATs, NaN elsewhere."""
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, np.nan)
        for b in self.bats:
            inside = (t >= b.start) & (t < b.end)
            out[inside] = b.covered_at(t[inside])
        return out

    def phase_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, Phase.QUESTIONNAIRE.value, dtype=object)
        for b in self.bats:
            out[(t >= b.start) & (t < b.end)] = b.phase.value
        return out.astype(str)

    @property
    def anxiety(self) -> np.ndarray:
        return self.anxiety_at(self.times)


def generate_latent(seed: int, script=DEFAULT_SCRIPT) -> LatentTrace:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    script = tuple((Phase(p), float(d)) for p, d in script)
    bats = []
    t = 0.0
    for phase, dur in script:
        if phase.is_bat:
            stop_remaining = float(rng.uniform(0.0, 0.4))
            bats.append(BatPlan(
                phase=phase, start=t, end=t + dur,
                approach=float(dur * rng.uniform(0.6, 0.85)),
                stop_remaining=stop_remaining,
                anticipation=float(rng.uniform(15.0, 35.0)),
                peak=float(rng.uniform(60.0, 95.0)),
                shape=float(rng.uniform(0.8, 1.6)),
                recovery=float(rng.uniform(8.0, 14.0)),
            ))
        t += dur
    n_waves = 3
    waves = np.column_stack([
        rng.uniform(0.4, 1.0, n_waves),
        rng.uniform(60.0, 400.0, n_waves),
        rng.uniform(0.0, 2 * np.pi, n_waves),
    ])
    return LatentTrace(t, script, tuple(bats), float(rng.uniform(1.5, 4.5)), waves)


def rating_schedule(latent: LatentTrace) -> list[tuple[float, float | None]]:
    """``(time, distance marker or None)`` for every scheduled rating, in order."""
    points = []
    for b in latent.bats:
        points.append((b.start - EXPLANATION_LEAD, None))
        points.append((b.start - ANTICIPATION_LEAD, None))
        points.append((b.start, 0.0))
        for q in (0.25, 0.5, 0.75):
            if q < b.covered_final - 1e-9:
                points.append((b.time_of_covered(q), q))
        points.append((b.start + b.approach, b.covered_final))
        points.append((b.end + EXIT_DELAY, None))
    return points


# --- signals ---------------------------------------------------------------


def _lag(x: np.ndarray, rate: float, tau: float) -> np.ndarray:
    if tau <= 0:
        return x.copy()
    alpha = 1.0 - np.exp(-1.0 / (rate * tau))
    out = np.empty_like(x)
    acc = x[0]
    for i, v in enumerate(x):
        acc += alpha * (v - acc)
        out[i] = acc
    return out


def _scr_kernel(rate: float, rise: float, decay: float) -> np.ndarray:
    t = np.arange(int(np.ceil(decay * 12 * rate))) / rate
    k = np.exp(-t / decay) - np.exp(-t / rise)
    return k / k.max()


@dataclass(eq=False)
class SynthSession:
    session: RawSession
    latent: LatentTrace
    scr_onsets: np.ndarray     # seconds from session start
    expected_scr: float        # integral of the SCR rate over the session
    seed: int
    hr_clean: np.ndarray       # HR without AR(1) noise, at 1 Hz


def synthesize_signals(
    latent: LatentTrace,
    seed: int,
    coupling: Coupling | None = None,
    noise: Noise | None = None,
    participant_id: str = "P00",
    start_time: float = 1_600_000_000.0,
) -> SynthSession:
    cp = coupling or Coupling()
    nz = noise or Noise()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    T = latent.duration

    hr0 = float(rng.uniform(62.0, 80.0))
    hr_gain = cp.hr_gain * float(rng.uniform(0.7, 1.3))
    tonic0 = float(rng.uniform(1.0, 5.0))
    tonic_slope = float(rng.uniform(-0.3, 0.3)) / T
    tonic_gain = cp.eda_tonic_gain * float(rng.uniform(0.6, 1.4))
    temp0 = float(rng.uniform(32.0, 34.5))
    temp_gain = cp.temp_gain * float(rng.uniform(0.7, 1.3))

    # HR at 1 Hz
    t_hr = np.arange(int(np.floor(T)) + 1, dtype=float)
    a_hr = latent.anxiety_at(t_hr) / 100.0
    hr_clean = hr0 + hr_gain * a_hr
    ar = np.zeros(t_hr.size)
    if nz.hr_sigma > 0:
        shocks = rng.normal(0.0, nz.hr_sigma, t_hr.size)
        for i in range(1, t_hr.size):
            ar[i] = nz.hr_phi * ar[i - 1] + shocks[i]
    hr = np.clip(hr_clean + ar, 45.0, 180.0)

    # IBI: beats follow the instantaneous HR; jitter shrinks with anxiety
    beats, intervals = [], []
    tb = float(rng.uniform(0.5, 1.5))
    while True:
        hr_now = np.interp(tb, t_hr, hr)
        a_now = float(latent.anxiety_at(tb)) / 100.0
        jitter = nz.ibi_jitter * (1.0 - cp.rmssd_gain * a_now)
        ivl = 60.0 / hr_now + (rng.normal(0.0, jitter) if jitter > 0 else 0.0)
        ivl = max(ivl, 0.33)
        nxt = tb + ivl
        if nxt > T:
            break
        if nz.artifact_rate > 0 and rng.random() < nz.artifact_rate:
            a_ivl = float(rng.uniform(0.12, 0.28))
            if tb + a_ivl < nxt - 0.05:
                beats.append(tb + a_ivl)
                intervals.append(a_ivl)
        beats.append(nxt)
        intervals.append(ivl)
        tb = nxt

    # EDA at 4 Hz
    rate_eda = 4.0
    t_eda = np.arange(int(np.floor(T * rate_eda)) + 1) / rate_eda
    a_eda = latent.anxiety_at(t_eda) / 100.0
    tonic = tonic0 + tonic_slope * t_eda + tonic_gain * _lag(a_eda, rate_eda, cp.eda_lag)
    if nz.eda_wander > 0:
        # own stream so the wander leaves every other channel untouched
        wrng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, 1]))
        for _ in range(4):
            period = wrng.uniform(20.0, 40.0)
            amp = nz.eda_wander * wrng.uniform(0.5, 1.0)
            tonic = tonic + amp * np.sin(2 * np.pi * t_eda / period + wrng.uniform(0, 2 * np.pi))
    lam = cp.scr_rate_base + cp.scr_rate_gain * a_eda
    lam_max = cp.scr_rate_base + cp.scr_rate_gain
    expected = float(np.sum(lam) / rate_eda)
    onsets = np.zeros(0)
    if lam_max > 0:
        n_cand = rng.poisson(lam_max * T)
        cand = np.sort(rng.uniform(0.0, T, n_cand))
        keep = rng.random(n_cand) * lam_max < np.interp(cand, t_eda, lam)
        onsets = cand[keep]
    phasic = np.zeros(t_eda.size)
    kernel = _scr_kernel(rate_eda, cp.scr_rise, cp.scr_decay)
    for onset in onsets:
        i0 = int(np.ceil(onset * rate_eda))
        a_here = float(np.interp(onset, t_eda, a_eda))
        amp = cp.scr_amplitude * (0.5 + a_here) * float(rng.gamma(4.0, 0.25))
        seg = phasic[i0 : i0 + kernel.size]
        seg += amp * kernel[: seg.size]
    eda = tonic + phasic
    if nz.eda_sigma > 0:
        eda = eda + rng.normal(0.0, nz.eda_sigma, eda.size)
    eda = np.maximum(eda, 0.01)

    # TEMP at 1 Hz
    a_temp = _lag(a_hr, 1.0, 20.0)
    temp = temp0 - cp.temp_drift * t_hr / T - temp_gain * a_temp
    if nz.temp_sigma > 0:
        temp = temp + rng.normal(0.0, nz.temp_sigma, temp.size)
    temp = np.clip(temp, 28.0, 37.0)

    def drop(n):
        mask = np.zeros(n, dtype=bool)
        if nz.missing_rate > 0 and n > 4:
            idx = np.flatnonzero(rng.random(n - 4) < nz.missing_rate) + 2
            # keep drops isolated
            idx = idx[np.concatenate(([True], np.diff(idx) > 1))] if idx.size else idx
            mask[idx] = True
        return mask

    channels = {
        ChannelKind.EDA: TimeSeriesChannel(
            ChannelKind.EDA, start_time, rate_eda, np.round(eda, 4), drop(eda.size)),
        ChannelKind.HR: TimeSeriesChannel(
            ChannelKind.HR, start_time, 1.0, np.round(hr, 2), drop(hr.size)),
        ChannelKind.TEMP: TimeSeriesChannel(
            ChannelKind.TEMP, start_time, 1.0, np.round(temp, 3), drop(temp.size)),
    }
    for ch in channels.values():
        ch.values[ch.missing] = np.nan
    ibi = IbiSeries(start_time, np.round(np.asarray(beats), 6), np.round(np.asarray(intervals), 6))

    events = []
    for b in latent.bats:
        events.append(Event(start_time + b.start, EventKind.PHASE_START, None, b.phase))
        events.append(Event(start_time + b.end, EventKind.PHASE_END, None, b.phase))
    for t_r, marker in rating_schedule(latent):
        value = int(np.round(float(latent.anxiety_at(t_r))))
        events.append(Event(start_time + t_r, EventKind.RATING, value))
        if marker is not None:
            events.append(Event(start_time + t_r, EventKind.DISTANCE, float(marker)))
    # phase boundaries sort before ratings that share their timestamp
    order = {EventKind.PHASE_END: 0, EventKind.PHASE_START: 1, EventKind.RATING: 2, EventKind.DISTANCE: 3}
    events.sort(key=lambda e: (e.t, order[e.kind]))
    timeline = EventTimeline(tuple(events))
    session = assemble_session(participant_id, channels, ibi, timeline)
    return SynthSession(session, latent, onsets, expected, int(seed), hr_clean)


def generate_participant(config: SynthConfig, index: int) -> SynthSession:
    seed = participant_seed(config.seed, index)
    latent = generate_latent(seed, config.script)
    pid = f"P{index + 1:02d}"
    return synthesize_signals(latent, seed, config.coupling, config.noise, pid,
                              config.start_time + 86400.0 * index)


def write_ground_truth(path: Path, latent: LatentTrace) -> None:
    t = latent.times
    a = latent.anxiety_at(t)
    d = latent.distance_at(t)
    ph = latent.phase_at(t)
    lines = ["t,anxiety,distance,phase"]
    for i in range(t.size):
        dist = "" if np.isnan(d[i]) else repr(float(d[i]))
        lines.append(f"{float(t[i])!r},{float(a[i])!r},{dist},{ph[i]}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def generate_corpus(config: SynthConfig, out_dir: str | Path) -> Path:
    """Write ``config.n_participants`` session directories plus ground truth and a manifest.

    Returns the manifest path. ``OSError`` propagates for unwritable targets.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth_dir = out / "ground_truth"
    truth_dir.mkdir(exist_ok=True)
    participants = []
    for index in range(config.n_participants):
        synth = generate_participant(config, index)
        pid = synth.session.participant_id
        write_session_dir(out / pid, synth.session)
        write_ground_truth(truth_dir / f"{pid}.csv", synth.latent)
        participants.append({"participant_id": pid, "index": index, "seed": synth.seed, "dir": pid})
    manifest = {
        "note": SCAFFOLD_NOTE,
        "seed_rule": "SeedSequence([master_seed, index]).generate_state(1)[0]",
        "config": config.to_json(),
        "participants": participants,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def regenerate_from_manifest(manifest_path: str | Path, out_dir: str | Path) -> Path:
    doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    return generate_corpus(SynthConfig.from_json(doc["config"]), out_dir)
