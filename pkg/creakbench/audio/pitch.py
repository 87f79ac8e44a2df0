"""Difference-function (YIN-style) f0 estimation."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from creakbench.audio.core import AudioClip, frame_array
from creakbench.errors import InputError, UnvoicedError

DEFAULT_HOP_S = 0.010
DEFAULT_THRESHOLD = 0.15
MEDIAN_WINDOW = 5


@dataclass(frozen=True)
class PitchRange:
    f_min_hz: float = 50.0
    f_max_hz: float = 500.0

    def validate(self, sample_rate_hz: int) -> None:
        if not 0 < self.f_min_hz < self.f_max_hz < sample_rate_hz / 4:
            raise InputError(f"Invalid pitch range {self.f_min_hz}-{self.f_max_hz} Hz at {sample_rate_hz} Hz")


@dataclass(frozen=True)
class PitchContour:
    """Framewise f0 (0 = unvoiced) with per-frame voicing confidence.

    Frame i covers samples [i*hop, i*hop + frame_len); its centre sits at
    offset_s + i*hop_s.
    """

    hop_s: float
    f0_hz: np.ndarray
    voicing_conf: np.ndarray
    frame_len_s: float = 0.0
    offset_s: float = 0.0

    def __post_init__(self) -> None:
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        conf = np.asarray(self.voicing_conf, dtype=np.float64)
        if f0.shape != conf.shape or f0.ndim != 1:
            raise InputError("f0_hz and voicing_conf must be 1-D and equally long")
        if np.any(f0 < 0) or not np.all(np.isfinite(f0)):
            raise InputError("f0 values must be finite and non-negative")
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voicing_conf", conf)

    def __len__(self) -> int:
        return len(self.f0_hz)

    @classmethod
    def from_values(cls, f0_hz, hop_s: float = DEFAULT_HOP_S) -> PitchContour:
        """Contour from raw values; voiced frames get confidence 1."""
        f0 = np.asarray(f0_hz, dtype=np.float64)
        return cls(hop_s=hop_s, f0_hz=f0, voicing_conf=(f0 > 0).astype(np.float64))

    @property
    def voiced(self) -> np.ndarray:
        return self.f0_hz > 0

    @property
    def times_s(self) -> np.ndarray:
        return self.offset_s + np.arange(len(self)) * self.hop_s

    def frame_index(self, t_s: float) -> int:
        i = int(round((t_s - self.offset_s) / self.hop_s))
        return min(max(i, 0), len(self) - 1)

    def f0_at(self, t_s: float) -> float:
        """f0 of the frame nearest to t_s (0 when unvoiced or empty)."""
        if len(self) == 0:
            return 0.0
        return float(self.f0_hz[self.frame_index(t_s)])

    def scaled(self, factor: float) -> PitchContour:
        """Voiced frames multiplied by factor; unvoiced stay 0."""
        return replace(self, f0_hz=self.f0_hz * factor)


def _difference(frames: np.ndarray, window: int, tau_max: int) -> np.ndarray:
    """d(tau) = sum_{j<W} (x_j - x_{j+tau})^2 for tau in [0, tau_max], per frame."""
    span = frames.shape[1]
    nfft = 1 << int(np.ceil(np.log2(span + window)))
    head = np.fft.rfft(frames[:, :window], nfft)
    full = np.fft.rfft(frames, nfft)
    cross = np.fft.irfft(np.conj(head) * full, nfft)[:, :tau_max + 1]

    csum = np.concatenate([np.zeros((len(frames), 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    taus = np.arange(tau_max + 1)
    energy_lagged = csum[:, taus + window] - csum[:, taus]
    energy_head = csum[:, window][:, None]
    d = energy_head + energy_lagged - 2.0 * cross
    d[:, 0] = 0.0
    return np.maximum(d, 0.0)


def _cmndf(d: np.ndarray) -> np.ndarray:
    """Cumulative-mean-normalized difference; 1 where undefined."""
    out = np.ones_like(d)
    running = np.cumsum(d[:, 1:], axis=1)
    taus = np.arange(1, d.shape[1])
    valid = running > 1e-12 * np.maximum(running[:, -1:], 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[:, 1:] = np.where(valid, d[:, 1:] * taus / running, 1.0)
    return out


def _pick_period(cmndf: np.ndarray, tau_min: int, tau_max: int, threshold: float) -> tuple[float, float]:
    """(refined period in samples, dip value) or (0, 1) when no dip passes."""
    below = np.nonzero(cmndf[tau_min:tau_max] < threshold)[0]
    if len(below) == 0:
        return 0.0, 1.0
    tau = tau_min + int(below[0])
    while tau + 1 < tau_max and cmndf[tau + 1] < cmndf[tau]:
        tau += 1
    a, b, c = cmndf[tau - 1], cmndf[tau], cmndf[tau + 1]
    denom = a - 2.0 * b + c
    shift = 0.5 * (a - c) / denom if denom > 0 else 0.0
    return tau + float(np.clip(shift, -1.0, 1.0)), float(b)


def _median_smooth(f0: np.ndarray, width: int = MEDIAN_WINDOW) -> np.ndarray:
    """Median over voiced neighbours within the window; unvoiced frames untouched."""
    out = f0.copy()
    half = width // 2
    voiced = f0 > 0
    for i in np.nonzero(voiced)[0]:
        lo, hi = max(0, i - half), min(len(f0), i + half + 1)
        out[i] = np.median(f0[lo:hi][voiced[lo:hi]])
    return out


def estimate_contour(
    clip: AudioClip,
    pitch_range: PitchRange = PitchRange(),
    threshold: float = DEFAULT_THRESHOLD,
    hop_s: float = DEFAULT_HOP_S,
) -> PitchContour:
    """Framewise f0 of a clip. Fully unvoiced input gives an all-zero contour."""
    sr = clip.sample_rate_hz
    pitch_range.validate(sr)
    tau_min = max(2, int(np.floor(sr / pitch_range.f_max_hz)))
    tau_max = int(np.ceil(sr / pitch_range.f_min_hz))
    window = tau_max
    span = window + tau_max
    hop = int(round(hop_s * sr))

    frames = frame_array(clip.samples, span, hop)
    n = len(frames)
    f0 = np.zeros(n)
    conf = np.zeros(n)
    if n:
        cmndf = _cmndf(_difference(frames, window, tau_max))
        for i in range(n):
            period, dip = _pick_period(cmndf[i], tau_min, tau_max, threshold)
            if period <= 0:
                continue
            freq = sr / period
            if pitch_range.f_min_hz <= freq <= pitch_range.f_max_hz:
                f0[i] = freq
                conf[i] = float(np.clip(1.0 - dip, 0.0, 1.0))
        f0 = _median_smooth(f0)

    return PitchContour(
        hop_s=hop / sr,
        f0_hz=f0,
        voicing_conf=conf,
        frame_len_s=span / sr,
        offset_s=span / (2 * sr),
    )


def mean_pitch(contour: PitchContour) -> float:
    """Arithmetic mean over voiced frames."""
    voiced = contour.f0_hz[contour.voiced]
    if len(voiced) == 0:
        raise UnvoicedError()
    return float(voiced.mean())
