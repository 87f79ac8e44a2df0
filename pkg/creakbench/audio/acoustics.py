"""Voice-quality correlates of creak: mean pitch, H1-H2, HNR, CPP (and jitter)."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import get_window

from creakbench.audio.core import AudioClip, FrameSpec, frame_signal
from creakbench.audio.pitch import PitchContour, PitchRange, estimate_contour, mean_pitch
from creakbench.audio.psola import mark_epochs
from creakbench.audio.vad import trim_silence
from creakbench.errors import InputError, UnvoicedError

# ==========================================================================
# CONSTANTS
# ==========================================================================
HNR_FLOOR_DB = -10.0
HNR_CEIL_DB = 60.0
HARMONIC_TOLERANCE_BINS = 1.5
CPP_SEARCH_S = (1.0 / 500.0, 1.0 / 60.0)
CPP_FIT_S = (0.001, 0.016)
CPP_TIME_SMOOTH_FRAMES = 11
CPP_QUEFRENCY_SMOOTH_BINS = 7
DEFAULT_FRAME_S = 0.040


@dataclass(frozen=True)
class VoiceFeatures:
    mean_pitch_hz: float
    h1h2_db: float
    hnr_db: float
    cpp_db: float
    voiced_fraction: float
    jitter_pct: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _voiced_frames(clip: AudioClip, contour: PitchContour) -> tuple[np.ndarray, np.ndarray]:
    """Raw frames on the contour's grid for voiced frames, and their f0."""
    sr = clip.sample_rate_hz
    frame_len = int(round((contour.frame_len_s or DEFAULT_FRAME_S) * sr))
    hop = contour.hop_s * sr
    frames, f0s = [], []
    for i in np.nonzero(contour.voiced)[0]:
        start = int(round(i * hop))
        seg = clip.samples[start:start + frame_len]
        if len(seg) < frame_len:
            continue
        frames.append(seg - seg.mean())
        f0s.append(contour.f0_hz[i])
    if not frames:
        raise UnvoicedError()
    return np.asarray(frames), np.asarray(f0s)


def _peak_db(spectrum_db: np.ndarray, freq_hz: float, bin_hz: float, tolerance_hz: float) -> float:
    """Parabolically interpolated peak level within freq +- tolerance."""
    lo = max(1, int(np.floor((freq_hz - tolerance_hz) / bin_hz)))
    hi = min(len(spectrum_db) - 2, int(np.ceil((freq_hz + tolerance_hz) / bin_hz)))
    i = lo + int(np.argmax(spectrum_db[lo:hi + 1]))
    a, b, c = spectrum_db[i - 1], spectrum_db[i], spectrum_db[i + 1]
    denom = a - 2.0 * b + c
    if denom >= 0:
        return float(b)
    p = 0.5 * (a - c) / denom
    return float(b - 0.25 * (a - c) * p)


def h1_h2(clip: AudioClip, contour: PitchContour) -> float:
    """Mean level difference (dB) between the first two harmonics over voiced frames."""
    frames, f0s = _voiced_frames(clip, contour)
    sr = clip.sample_rate_hz
    frame_len = frames.shape[1]
    nfft = max(8192, 1 << int(np.ceil(np.log2(8 * frame_len))))
    window = get_window("hann", frame_len)
    spectra = np.abs(np.fft.rfft(frames * window, nfft))
    bin_hz = sr / nfft
    tolerance_hz = HARMONIC_TOLERANCE_BINS * sr / frame_len

    values = []
    for spectrum, f0 in zip(spectra, f0s):
        if spectrum.max() <= 0:
            continue
        level = 20.0 * np.log10(spectrum + 1e-12 * spectrum.max())
        values.append(_peak_db(level, f0, bin_hz, tolerance_hz) - _peak_db(level, 2 * f0, bin_hz, tolerance_hz))
    if not values:
        raise UnvoicedError()
    return float(np.mean(values))


def _normalized_autocorr(x: np.ndarray, lag: int) -> float:
    a, b = x[:len(x) - lag], x[lag:]
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(np.dot(a, b) / denom) if denom > 0 else 0.0


def hnr(clip: AudioClip, contour: PitchContour) -> float:
    """Mean HNR (dB) from the normalized autocorrelation peak at the local period."""
    frames, f0s = _voiced_frames(clip, contour)
    sr = clip.sample_rate_hz
    values = []
    for frame, f0 in zip(frames, f0s):
        period = sr / f0
        lags = np.arange(int(round(period)) - 2, int(round(period)) + 3)
        lags = lags[(lags >= 1) & (lags < len(frame) - 1)]
        if len(lags) < 3:
            continue
        r = np.array([_normalized_autocorr(frame, int(lag)) for lag in lags])
        i = int(np.argmax(r))
        peak = r[i]
        if 0 < i < len(r) - 1:
            a, b, c = r[i - 1], r[i], r[i + 1]
            denom = a - 2.0 * b + c
            if denom < 0:
                peak = b - 0.125 * (a - c) ** 2 / denom
        if peak >= 1.0:
            values.append(HNR_CEIL_DB)
        elif peak <= 0.0:
            values.append(HNR_FLOOR_DB)
        else:
            values.append(float(np.clip(10.0 * np.log10(peak / (1.0 - peak)), HNR_FLOOR_DB, HNR_CEIL_DB)))
    if not values:
        raise UnvoicedError()
    return float(np.mean(values))


def cpp(
    clip: AudioClip,
    contour: PitchContour | None = None,
    search_s: tuple[float, float] = CPP_SEARCH_S,
    fit_s: tuple[float, float] = CPP_FIT_S,
) -> float:
    """Smoothed cepstral peak prominence (dB), averaged over voiced frames.

    Power cepstra of Hann-windowed 40 ms frames are averaged over 11 frames
    and 7 quefrency bins before the peak is compared with a least-squares
    line fitted over fit_s. Without voiced frames all frames are averaged.
    """
    sr = clip.sample_rate_hz
    spec = FrameSpec(frame_len_s=DEFAULT_FRAME_S, hop_s=0.010)
    framed = frame_signal(clip, spec)
    if len(framed) == 0:
        raise InputError(f"Clip of {clip.duration_s * 1000:.1f} ms too short for CPP")

    frames = framed.frames
    energy = np.max(np.abs(frames), axis=1)
    keep = energy > 0
    if not np.any(keep):
        raise InputError("CPP undefined for digital silence")

    nfft = 1 << int(np.ceil(np.log2(frames.shape[1])))
    mag = np.abs(np.fft.rfft(frames[keep], nfft))
    log_spec = 20.0 * np.log10(mag + 1e-10 * mag.max(axis=1, keepdims=True))
    power_ceps = np.fft.irfft(log_spec, nfft) ** 2
    power_ceps = uniform_filter1d(power_ceps, CPP_TIME_SMOOTH_FRAMES, axis=0, mode="nearest")
    power_ceps = uniform_filter1d(power_ceps, CPP_QUEFRENCY_SMOOTH_BINS, axis=1, mode="nearest")
    ceps_db = 10.0 * np.log10(power_ceps + 1e-30)

    quefrency = np.arange(nfft) / sr
    search = np.nonzero((quefrency >= search_s[0]) & (quefrency <= search_s[1]))[0]
    fit = np.nonzero((quefrency >= fit_s[0]) & (quefrency <= fit_s[1]))[0]

    values = np.empty(len(ceps_db))
    for j, row in enumerate(ceps_db):
        slope, intercept = np.polyfit(quefrency[fit], row[fit], 1)
        peak = search[int(np.argmax(row[search]))]
        values[j] = row[peak] - (slope * quefrency[peak] + intercept)

    if contour is None:
        contour = estimate_contour(clip)
    centres = framed.start_times_s[keep] + spec.frame_len_s / 2
    voiced = np.array([contour.f0_at(t) > 0 for t in centres]) if len(contour) else np.zeros(len(values), bool)
    return float(values[voiced].mean() if np.any(voiced) else values.mean())


def jitter_pct(clip: AudioClip, contour: PitchContour) -> float:
    """Local jitter: mean absolute difference of consecutive voiced periods over mean period."""
    train = mark_epochs(clip, contour)
    spacing = np.diff(train.epochs).astype(np.float64)
    both_voiced = train.voiced[:-1] & train.voiced[1:]
    periods = np.where(both_voiced, spacing, np.nan)
    pairs = np.abs(np.diff(periods))
    pairs = pairs[np.isfinite(pairs)]
    voiced_periods = periods[np.isfinite(periods)]
    if len(pairs) == 0:
        return 0.0
    return float(100.0 * pairs.mean() / voiced_periods.mean())


def extract_features(
    clip: AudioClip,
    pitch_range: PitchRange = PitchRange(),
    vad_threshold_db: float = -35.0,
    hangover_frames: int = 5,
) -> VoiceFeatures:
    """VAD, pitch, then the spectral measures on the speech-only audio."""
    speech = trim_silence(clip, vad_threshold_db, hangover_frames)
    contour = estimate_contour(speech, pitch_range)
    voiced_fraction = float(np.mean(contour.voiced)) if len(contour) else 0.0
    return VoiceFeatures(
        mean_pitch_hz=mean_pitch(contour),
        h1h2_db=h1_h2(speech, contour),
        hnr_db=hnr(speech, contour),
        cpp_db=cpp(speech, contour),
        voiced_fraction=voiced_fraction,
        jitter_pct=jitter_pct(speech, contour),
    )
