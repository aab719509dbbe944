"""Butterworth IIR design and zero-phase application.

Coefficients are designed here from the analog prototype via the bilinear
transform with frequency pre-warping, and emitted as second-order sections.
Single passes run through :func:`scipy.signal.sosfilt`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal

from .errors import InvalidSpec, SignalTooShort


@dataclass(frozen=True)
class FilterSpec:
    cutoff: float
    order: int = 4
    mode: str = "lowpass"
    zero_phase: bool = True

    def validate(self, rate: float) -> None:
        if self.mode not in ("lowpass", "highpass"):
            raise InvalidSpec(f"unknown filter mode {self.mode!r}")
        if int(self.order) != self.order or self.order < 1:
            raise InvalidSpec(f"filter order must be a positive integer, got {self.order}")
        if not 0 < self.cutoff < rate / 2:
            raise InvalidSpec(f"cutoff {self.cutoff} Hz not inside (0, {rate / 2}) Hz")


def butterworth_sos(order: int, cutoff: float, rate: float, mode: str = "lowpass") -> np.ndarray:
    """Second-order sections ``[b0, b1, b2, 1, a1, a2]`` for a digital Butterworth filter."""
    FilterSpec(cutoff, order, mode).validate(rate)
    fs2 = 2.0 * rate
    warped = fs2 * np.tan(np.pi * cutoff / rate)
    k = np.arange(1, order + 1)
    prototype = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    if mode == "lowpass":
        s_poles = warped * prototype
        zero = -1.0
        # unity gain at DC
        ref = 1.0
    else:
        s_poles = warped / prototype
        zero = 1.0
        # unity gain at Nyquist
        ref = -1.0
    z_poles = (fs2 + s_poles) / (fs2 - s_poles)

    # Pair conjugates; the upper-half-plane member represents each pair.
    upper = sorted((p for p in z_poles if p.imag > 1e-12), key=lambda p: abs(p))
    real = sorted((p.real for p in z_poles if abs(p.imag) <= 1e-12), key=abs)
    sections = []
    for p in upper:
        sections.append([1.0, -2.0 * zero, 1.0, 1.0, -2.0 * p.real, abs(p) ** 2])
    for p in real:
        sections.append([1.0, -zero, 0.0, 1.0, -p, 0.0])
    sos = np.asarray(sections, dtype=float)
    for row in sos:
        b = row[0] + row[1] * ref + row[2] * ref**2
        a = row[3] + row[4] * ref + row[5] * ref**2
        row[:3] *= a / b
    return sos


def _single_pass(sos: np.ndarray, x: np.ndarray) -> np.ndarray:
    zi = _signal.sosfilt_zi(sos) * x[0]
    y, _ = _signal.sosfilt(sos, x, zi=zi)
    return y


def butterworth_filter(x, rate: float, spec: FilterSpec) -> np.ndarray:
    """Filter ``x`` sampled at ``rate`` Hz.

    With ``spec.zero_phase`` the signal is odd-extended at both ends, passed
    forward and backward, and the two pass orderings are averaged. The
    averaging makes the result exactly covariant under time reversal, which a
    single forward-then-backward ordering is not near the edges.
    """
    x = np.asarray(x, dtype=float)
    spec.validate(rate)
    if x.ndim != 1 or x.size <= 3 * spec.order:
        raise SignalTooShort(f"need more than {3 * spec.order} samples, got {x.size}")
    sos = butterworth_sos(spec.order, spec.cutoff, rate, spec.mode)
    if not spec.zero_phase:
        return _single_pass(sos, x)

    pad = min(x.size - 1, max(6 * sos.shape[0], int(np.ceil(8 * rate / spec.cutoff))))
    ext = np.concatenate(
        (2 * x[0] - x[pad:0:-1], x, 2 * x[-1] - x[-2 : -pad - 2 : -1])
    )
    fb = _single_pass(sos, _single_pass(sos, ext)[::-1])[::-1]
    bf = _single_pass(sos, _single_pass(sos, ext[::-1])[::-1])
    return 0.5 * (fb + bf)[pad : pad + x.size]
