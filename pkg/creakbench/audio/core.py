"""Audio container, WAV I/O and framing."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import gcd
from pathlib import Path

import numpy as np
import soundfile as sf
from scipy.signal import get_window, resample_poly

from creakbench.errors import AudioFormatError, AudioIOError, InputError, UnsupportedAudioError

CANONICAL_RATE_HZ = 16000
MIN_RATE_HZ = 8000
PCM16_FULL_SCALE = 32767

_SUPPORTED_SUBTYPES = {"PCM_16", "FLOAT"}


@dataclass(frozen=True)
class AudioClip:
    """Mono float64 samples in [-1, 1] with their sample rate.

    An empty clip is representable (zero-length synthesis) but cannot be written.
    """

    samples: np.ndarray
    sample_rate_hz: int = CANONICAL_RATE_HZ

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InputError(f"AudioClip must be mono, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InputError("AudioClip samples must be finite")
        if int(self.sample_rate_hz) < MIN_RATE_HZ:
            raise InputError(f"Sample rate {self.sample_rate_hz} Hz below {MIN_RATE_HZ} Hz")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def scaled(self, gain: float) -> AudioClip:
        return AudioClip(self.samples * gain, self.sample_rate_hz)

    def reversed(self) -> AudioClip:
        return AudioClip(self.samples[::-1].copy(), self.sample_rate_hz)


class Window(str, Enum):
    RECTANGULAR = "rectangular"
    HANN = "hann"


@dataclass(frozen=True)
class FrameSpec:
    frame_len_s: float = 0.040
    hop_s: float = 0.010
    window: Window = Window.HANN

    def __post_init__(self) -> None:
        if not 0 < self.hop_s <= self.frame_len_s:
            raise InputError(f"Need 0 < hop ({self.hop_s}) <= frame ({self.frame_len_s})")

    def frame_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_len_s * sample_rate_hz))

    def hop_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.hop_s * sample_rate_hz))


@dataclass(frozen=True)
class Frames:
    """Windowed frames (n_frames, frame_len) and their start times in seconds."""

    frames: np.ndarray
    start_times_s: np.ndarray

    def __len__(self) -> int:
        return len(self.frames)


def window_coefficients(window: Window, length: int) -> np.ndarray:
    """Symmetric window of the given length (Hann endpoints are exactly 0)."""
    if window == Window.RECTANGULAR:
        return np.ones(length)
    return get_window("hann", length, fftbins=False)


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


def frame_array(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Unwindowed frames as a (n, frame_len) view-backed copy."""
    n = frame_count(len(samples), frame_len, hop)
    if n == 0:
        return np.zeros((0, frame_len))
    view = np.lib.stride_tricks.sliding_window_view(samples, frame_len)[::hop]
    return np.array(view[:n])


def frame_signal(clip: AudioClip, spec: FrameSpec = FrameSpec()) -> Frames:
    """Split a clip into windowed frames; a clip shorter than one frame yields none."""
    frame_len = spec.frame_samples(clip.sample_rate_hz)
    hop = spec.hop_samples(clip.sample_rate_hz)
    raw = frame_array(clip.samples, frame_len, hop)
    frames = raw * window_coefficients(spec.window, frame_len)
    starts = np.arange(len(raw)) * hop / clip.sample_rate_hz
    return Frames(frames=frames, start_times_s=starts)


# ==========================================================================
# WAV I/O
# ==========================================================================

def resample(samples: np.ndarray, orig_rate_hz: int, target_rate_hz: int) -> np.ndarray:
    """Polyphase windowed-sinc resampling."""
    if orig_rate_hz == target_rate_hz or len(samples) == 0:
        return samples
    g = gcd(orig_rate_hz, target_rate_hz)
    return resample_poly(samples, target_rate_hz // g, orig_rate_hz // g, window=("kaiser", 5.0))


def read_wav(path: Path | str, target_rate_hz: int = CANONICAL_RATE_HZ) -> AudioClip:
    """Read a PCM16 or float32 WAV as a mono clip at the canonical rate."""
    path = Path(path)
    if not path.is_file():
        raise AudioIOError(f"Audio file not found: {path}")
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise AudioFormatError(f"Malformed WAV {path}: {e}") from e
    if info.subtype not in _SUPPORTED_SUBTYPES:
        raise UnsupportedAudioError(f"Unsupported WAV encoding {info.subtype} in {path}")

    try:
        if info.subtype == "PCM_16":
            raw, rate = sf.read(str(path), dtype="int16", always_2d=True)
            data = raw.astype(np.float64) / PCM16_FULL_SCALE
        else:
            data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except RuntimeError as e:
        raise AudioFormatError(f"Could not decode {path}: {e}") from e

    mono = data.mean(axis=1)
    mono = resample(mono, int(rate), target_rate_hz)
    return AudioClip(np.clip(mono, -1.0, 1.0), target_rate_hz)


def write_wav(clip: AudioClip, path: Path | str) -> None:
    """Write a clip as 16-bit little-endian mono PCM (+1.0 maps to 32767)."""
    path = Path(path)
    if len(clip) == 0:
        raise InputError("Cannot write an empty clip")
    if path.is_dir() or not path.parent.is_dir():
        raise AudioIOError(f"Cannot write WAV to {path}")
    pcm = np.clip(np.round(clip.samples * PCM16_FULL_SCALE), -PCM16_FULL_SCALE - 1, PCM16_FULL_SCALE)
    try:
        sf.write(str(path), pcm.astype("<i2"), clip.sample_rate_hz, subtype="PCM_16", format="WAV")
    except (RuntimeError, OSError) as e:
        raise AudioIOError(f"Cannot write WAV to {path}: {e}") from e
