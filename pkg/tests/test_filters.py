import numpy as np
import pytest
from scipy import signal

from wearable_anxiety.errors import InvalidSpec, SignalTooShort
from wearable_anxiety.filters import FilterSpec, butterworth_filter, butterworth_sos


def steady_amplitude(y, t, freq):
    """Least-squares sinusoid amplitude over the middle third."""
    n = y.size
    sl = slice(n // 3, 2 * n // 3)
    A = np.column_stack([np.sin(2 * np.pi * freq * t[sl]), np.cos(2 * np.pi * freq * t[sl])])
    coef, *_ = np.linalg.lstsq(A, y[sl], rcond=None)
    return float(np.hypot(*coef))


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 8])
@pytest.mark.parametrize("mode", ["lowpass", "highpass"])
def test_design_matches_reference(order, mode):
    ours = butterworth_sos(order, 0.5, 4.0, mode)
    ref = signal.butter(order, 0.5, btype=mode, fs=4.0, output="sos")
    w = np.linspace(0, np.pi, 256)
    _, h1 = signal.sosfreqz(ours, worN=w)
    _, h2 = signal.sosfreqz(ref, worN=w)
    np.testing.assert_allclose(np.abs(h1), np.abs(h2), atol=1e-12)


@pytest.mark.parametrize("rate", [1.0, 4.0, 32.0])
def test_dc_gain_is_one(rate):
    x = np.full(400, 2.0)
    y = butterworth_filter(x, rate, FilterSpec(rate / 8))
    assert np.max(np.abs(y - 2.0)) < 1e-9


def test_cutoff_amplitude_half_and_stopband():
    rate, fc = 4.0, 0.5
    t = np.arange(0, 2000, 1 / rate)
    at_cut = butterworth_filter(np.sin(2 * np.pi * fc * t), rate, FilterSpec(fc))
    assert abs(steady_amplitude(at_cut, t, fc) - 0.5) <= 0.02
    t2 = np.arange(0, 2000, 1 / 32.0)
    far = butterworth_filter(np.sin(2 * np.pi * 10 * fc * t2), 32.0, FilterSpec(fc))
    assert steady_amplitude(far, t2, 10 * fc) < 1e-3


def test_single_pass_mode_is_causal():
    x = np.zeros(200)
    x[100] = 1.0
    y = butterworth_filter(x, 4.0, FilterSpec(0.5, zero_phase=False))
    assert np.all(y[:100] == 0.0)


def test_linearity_and_reversal_symmetry():
    rng = np.random.default_rng(0)
    x, z = rng.standard_normal((2, 1000))
    spec = FilterSpec(0.5)
    f = lambda s: butterworth_filter(s, 4.0, spec)
    np.testing.assert_allclose(f(2.5 * x - 0.7 * z), 2.5 * f(x) - 0.7 * f(z), atol=1e-8)
    np.testing.assert_allclose(f(x[::-1])[::-1], f(x), atol=1e-8)
    hp = FilterSpec(0.05, mode="highpass")
    np.testing.assert_allclose(butterworth_filter(x[::-1], 4.0, hp)[::-1], butterworth_filter(x, 4.0, hp), atol=1e-8)


def test_errors():
    with pytest.raises(SignalTooShort):
        butterworth_filter(np.ones(12), 4.0, FilterSpec(0.5, order=4))
    with pytest.raises(InvalidSpec):
        butterworth_filter(np.ones(100), 4.0, FilterSpec(2.0))
    with pytest.raises(InvalidSpec):
        butterworth_filter(np.ones(100), 4.0, FilterSpec(0.5, order=0))
    with pytest.raises(InvalidSpec):
        butterworth_filter(np.ones(100), 4.0, FilterSpec(0.5, mode="bandpass"))
