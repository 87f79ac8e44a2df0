"""Energy-based voice activity detection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from creakbench.audio.core import AudioClip, frame_array
from creakbench.errors import InputError, NoSpeechError

VAD_FRAME_S = 0.025
VAD_HOP_S = 0.010


@dataclass(frozen=True)
class SpeechSegments:
    """Sorted, non-overlapping half-open (start_s, end_s) intervals."""

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        prev_end = -np.inf
        for start, end in self.intervals:
            if not start < end or start < prev_end:
                raise InputError(f"Invalid segment list: {self.intervals}")
            prev_end = end

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @property
    def total_s(self) -> float:
        return float(sum(end - start for start, end in self.intervals))


def _fill_short_gaps(active: np.ndarray, max_gap: int) -> np.ndarray:
    """Close inactive runs of at most max_gap frames that sit between active frames."""
    filled = active.copy()
    gaps, _ = ndimage.label(~active)
    for sl in ndimage.find_objects(gaps):
        start, stop = sl[0].start, sl[0].stop
        if start == 0 or stop == len(active):
            continue
        if stop - start <= max_gap:
            filled[start:stop] = True
    return filled


def detect_speech(
    clip: AudioClip,
    threshold_db: float = -35.0,
    hangover_frames: int = 5,
) -> SpeechSegments:
    """Frames within threshold_db of the loudest frame, smoothed by hangover.

    Hangover acts as a morphological closing (dilate then erode), so pauses up
    to 2*hangover frames are bridged while segment ends do not grow. Each edge
    is placed half a hop inside the frame that first (last) sees energy, which
    puts it within one hop of a sharp onset (offset).
    """
    sr = clip.sample_rate_hz
    frame = int(round(VAD_FRAME_S * sr))
    hop = int(round(VAD_HOP_S * sr))
    frames = frame_array(clip.samples, frame, hop)
    if len(frames) == 0:
        return SpeechSegments()

    power = np.mean(frames ** 2, axis=1)
    peak = power.max()
    if peak <= 0:
        return SpeechSegments()
    with np.errstate(divide="ignore"):
        energy_db = 10.0 * np.log10(power / peak)
    active = energy_db > threshold_db
    if hangover_frames > 0:
        active = _fill_short_gaps(active, 2 * hangover_frames)

    n = len(frames)
    duration = len(clip) / sr
    runs, _ = ndimage.label(active)
    intervals = []
    for sl in ndimage.find_objects(runs):
        first, last = sl[0].start, sl[0].stop - 1
        start = 0.0 if first == 0 else (first * hop + frame - hop / 2) / sr
        end = duration if last == n - 1 else (last * hop + hop / 2) / sr
        if end <= start:
            start, end = first * hop / sr, min((last * hop + frame) / sr, duration)
        intervals.append((start, end))
    return SpeechSegments(tuple(intervals))


def apply_segments(clip: AudioClip, segments: SpeechSegments) -> AudioClip:
    """Concatenate the audio inside the segments."""
    if len(segments) == 0:
        raise NoSpeechError()
    sr = clip.sample_rate_hz
    pieces = [clip.samples[int(round(s * sr)):int(round(e * sr))] for s, e in segments]
    return AudioClip(np.concatenate(pieces), sr)


def trim_silence(clip: AudioClip, threshold_db: float = -35.0, hangover_frames: int = 5) -> AudioClip:
    """detect_speech followed by apply_segments."""
    return apply_segments(clip, detect_speech(clip, threshold_db, hangover_frames))
