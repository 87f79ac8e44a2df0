"""Deterministic glottal-pulse voice synthesis for test signals.

A Rosenberg glottal flow pulse train is shaped by cascaded Klatt-style
two-pole formant resonators. Creaky phonation is modelled by period jitter,
alternating-pulse amplitude (an f0/2 subharmonic) and a shorter open phase.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.signal import lfilter

from creakbench.audio.core import CANONICAL_RATE_HZ, AudioClip
from creakbench.errors import InputError

F0Contour = Union[float, Callable[[float], float]]

# Neutral /a/-like vowel
DEFAULT_FORMANTS: tuple[tuple[float, float], ...] = ((700.0, 130.0), (1220.0, 70.0), (2600.0, 160.0))
PEAK_LEVEL = 0.9
SPEED_QUOTIENT = 2.0


@dataclass(frozen=True)
class GlottalSpec:
    f0_contour_hz: F0Contour = 120.0
    open_quotient: float = 0.6
    jitter_pct: float = 0.0
    subharmonic_gain: float = 0.0
    formants_hz: tuple[tuple[float, float], ...] = field(default=DEFAULT_FORMANTS)
    noise_db: float = -60.0

    def __post_init__(self) -> None:
        if not 0.0 < self.open_quotient < 1.0:
            raise InputError(f"open_quotient must be in (0, 1), got {self.open_quotient}")
        if self.jitter_pct < 0:
            raise InputError("jitter_pct must be >= 0")
        if not 0.0 <= self.subharmonic_gain <= 1.0:
            raise InputError("subharmonic_gain must be in [0, 1]")

    def f0_at(self, t: float) -> float:
        f0 = self.f0_contour_hz(t) if callable(self.f0_contour_hz) else self.f0_contour_hz
        f0 = float(f0)
        if not 40.0 <= f0 <= 600.0:
            raise InputError(f"f0 {f0:.1f} Hz at t={t:.3f}s outside [40, 600] Hz")
        return f0


def rosenberg_pulse(phase: np.ndarray, open_quotient: float) -> np.ndarray:
    """Glottal flow over one period, phase in [0, 1)."""
    t_open = open_quotient * SPEED_QUOTIENT / (SPEED_QUOTIENT + 1.0)
    t_close = open_quotient
    flow = np.zeros_like(phase)
    rising = phase < t_open
    falling = (phase >= t_open) & (phase < t_close)
    flow[rising] = 0.5 * (1.0 - np.cos(np.pi * phase[rising] / t_open))
    flow[falling] = np.cos(0.5 * np.pi * (phase[falling] - t_open) / (t_close - t_open))
    return flow


def _resonate(x: np.ndarray, freq: float, bw: float, sample_rate_hz: int) -> np.ndarray:
    r = np.exp(-np.pi * bw / sample_rate_hz)
    c = -(r * r)
    b = 2.0 * r * np.cos(2.0 * np.pi * freq / sample_rate_hz)
    a = 1.0 - b - c  # unity DC gain
    return lfilter([a], [1.0, -b, -c], x)


def synth_glottal(
    spec: GlottalSpec,
    duration_s: float,
    sample_rate_hz: int = CANONICAL_RATE_HZ,
    rng_seed: int = 0,
) -> AudioClip:
    """Synthesize a vowel; bit-identical for identical (spec, seed)."""
    for center, _ in spec.formants_hz:
        if center >= sample_rate_hz / 2:
            raise InputError(f"Formant {center} Hz at or above Nyquist")
    n = int(round(duration_s * sample_rate_hz))
    if n <= 0:
        return AudioClip(np.zeros(0), sample_rate_hz)

    rng = np.random.default_rng(rng_seed)

    # Period boundaries (seconds), one jitter draw per period
    starts: list[float] = []
    periods: list[float] = []
    t = 0.0
    while t < duration_s:
        nominal = 1.0 / spec.f0_at(t)
        period = nominal * (1.0 + 0.01 * spec.jitter_pct * rng.standard_normal())
        period = max(period, 0.5 * nominal)
        starts.append(t)
        periods.append(period)
        t += period

    times = np.arange(n) / sample_rate_hz
    idx = np.searchsorted(np.asarray(starts), times, side="right") - 1
    phase = (times - np.asarray(starts)[idx]) / np.asarray(periods)[idx]
    amplitude = 1.0 - 0.5 * spec.subharmonic_gain * (idx % 2)

    signal = rosenberg_pulse(phase, spec.open_quotient) * amplitude
    signal -= signal.mean()
    for center, bandwidth in spec.formants_hz:
        signal = _resonate(signal, center, bandwidth, sample_rate_hz)

    peak = np.max(np.abs(signal))
    if peak > 0:
        signal = PEAK_LEVEL * signal / peak
    signal = signal + PEAK_LEVEL * 10.0 ** (spec.noise_db / 20.0) * rng.standard_normal(n)
    peak = np.max(np.abs(signal))
    if peak > 1.0:
        signal /= peak
    return AudioClip(signal, sample_rate_hz)


def creakiness_spec(level: float, f0_hz: float = 120.0) -> GlottalSpec:
    """Voice on a modal (0) to creaky (1) continuum.

    Lowers f0 by up to 30%, shortens the open phase, and raises jitter,
    subharmonic alternation and aspiration noise together.
    """
    level = float(np.clip(level, 0.0, 1.0))
    return GlottalSpec(
        f0_contour_hz=f0_hz * (1.0 - 0.3 * level),
        open_quotient=0.65 - 0.25 * level,
        jitter_pct=1.5 * level,
        subharmonic_gain=0.5 * level,
        noise_db=-60.0 + 25.0 * level,
    )
