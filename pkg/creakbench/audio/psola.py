"""TD-PSOLA pitch modification."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from creakbench.audio.core import AudioClip
from creakbench.audio.pitch import PitchContour
from creakbench.log import get_logger

logger = get_logger(__name__)

UNVOICED_SPACING_S = 0.010
MIN_RATIO = 0.25
MAX_RATIO = 4.0


@dataclass(frozen=True)
class EpochTrain:
    """Pitch marks (strictly increasing sample indices) with local period and voicing."""

    epochs: np.ndarray
    periods: np.ndarray
    voiced: np.ndarray

    def __len__(self) -> int:
        return len(self.epochs)

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.epochs)


@dataclass(frozen=True)
class ShiftResult:
    clip: AudioClip
    clamped: bool = False
    min_ratio: float = 1.0
    max_ratio: float = 1.0


def mark_epochs(clip: AudioClip, contour: PitchContour) -> EpochTrain:
    """One mark per period at the local maximum in voiced regions.

    The first voiced mark is the maximum over one period from the cursor; later
    ones are searched within +-0.25 period of the previous mark plus one
    period. Unvoiced stretches get pseudo-marks every 10 ms.
    """
    x = clip.samples
    sr = clip.sample_rate_hz
    n = len(x)
    unvoiced_step = UNVOICED_SPACING_S * sr

    epochs: list[int] = []
    periods: list[float] = []
    voiced: list[bool] = []
    cursor = 0.0
    while cursor < n:
        f0 = contour.f0_at(cursor / sr)
        floor_idx = epochs[-1] + 1 if epochs else 0
        if f0 > 0:
            period = sr / f0
            if epochs and voiced[-1]:
                centre = epochs[-1] + period
                lo, hi = centre - 0.25 * period, centre + 0.25 * period
            else:
                lo, hi = cursor, cursor + period
            lo_i = max(int(np.ceil(lo)), floor_idx)
            hi_i = min(int(np.floor(hi)) + 1, n)
            if lo_i >= hi_i:
                break
            mark = lo_i + int(np.argmax(x[lo_i:hi_i]))
            epochs.append(mark)
            periods.append(period)
            voiced.append(True)
            cursor = mark + period
        else:
            mark = max(int(round(cursor)), floor_idx)
            if mark >= n:
                break
            epochs.append(mark)
            periods.append(unvoiced_step)
            voiced.append(False)
            cursor = mark + unvoiced_step

    return EpochTrain(
        epochs=np.asarray(epochs, dtype=np.int64),
        periods=np.asarray(periods, dtype=np.float64),
        voiced=np.asarray(voiced, dtype=bool),
    )


def _half_hann(length: int, rising: bool) -> np.ndarray:
    """length+1 points from 0 to 1 (rising) or 1 to 0 (falling)."""
    if length <= 0:
        return np.ones(1)
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(length + 1) / length))
    return ramp if rising else ramp[::-1]


def _grain_window(train: EpochTrain, k: int, n: int, flat_left: bool) -> tuple[int, int, np.ndarray]:
    """(left extent, right extent, window) for the grain of analysis epoch k.

    Extents are the spacings to the neighbouring epochs. The opening grain
    and the grain of the last epoch extend flat to the clip edges so
    unit-ratio resynthesis is exact.
    """
    t = int(train.epochs[k])
    last = len(train) - 1
    left = t - int(train.epochs[k - 1]) if k > 0 else t
    right = int(train.epochs[k + 1]) - t if k < last else n - 1 - t
    rise = np.ones(left + 1) if flat_left else _half_hann(left, rising=True)
    fall = _half_hann(right, rising=False) if k < last else np.ones(right + 1)
    return left, right, np.concatenate([rise[:-1], fall])


def _rms_gain(reference: np.ndarray, signal: np.ndarray) -> float:
    """Gain that brings signal to the RMS of reference; 1 for silence."""
    ref = np.sqrt(np.mean(reference**2))
    got = np.sqrt(np.mean(signal**2))
    if got <= 0 or ref <= 0:
        return 1.0
    return float(ref / got)


def shift_pitch(
    clip: AudioClip,
    contour: PitchContour,
    target_contour: PitchContour,
    min_ratio: float = MIN_RATIO,
    max_ratio: float = MAX_RATIO,
) -> ShiftResult:
    """Resynthesize clip so its voiced f0 follows target_contour.

    Grains (Hann halves spanning the two neighbouring periods) are taken at
    the analysis epoch nearest to each synthesis epoch; synthesis epochs are
    spaced by the analysis spacing divided by the local f0 ratio. Output
    length equals input length. Where grains pile up (raised pitch) the
    overlap-add is divided by the square root of the window sum; the result
    is then scaled to the input RMS, which lowered pitch would otherwise lose.
    """
    x = clip.samples
    n = len(x)
    sr = clip.sample_rate_hz
    train = mark_epochs(clip, contour)
    if len(train) == 0:
        return ShiftResult(clip)

    out = np.zeros(n)
    wsum = np.zeros(n)
    clamped = False
    lo_seen, hi_seen = np.inf, -np.inf

    t_syn = float(train.epochs[0])
    first = True
    while t_syn < n:
        k = int(np.argmin(np.abs(train.epochs - t_syn)))
        ratio = 1.0
        if train.voiced[k]:
            src = contour.f0_at(t_syn / sr)
            tgt = target_contour.f0_at(t_syn / sr)
            if src > 0 and tgt > 0:
                ratio = tgt / src
                if not min_ratio <= ratio <= max_ratio:
                    clamped = True
                    ratio = float(np.clip(ratio, min_ratio, max_ratio))
                lo_seen, hi_seen = min(lo_seen, ratio), max(hi_seen, ratio)

        left, right, window = _grain_window(train, k, n, flat_left=first and k == 0)
        first = False
        centre = int(round(t_syn))
        src_pos = int(train.epochs[k])
        # Clip the grain to both the source and destination buffers
        a = max(-left, -src_pos, -centre)
        b = min(right, n - 1 - src_pos, n - 1 - centre)
        if b >= a:
            seg = slice(left + a, left + b + 1)
            out[centre + a:centre + b + 1] += x[src_pos + a:src_pos + b + 1] * window[seg]
            wsum[centre + a:centre + b + 1] += window[seg]

        if k == len(train) - 1:
            break  # its grain runs flat to the end of the clip
        t_syn += max(right / ratio, 1.0)

    out /= np.where(wsum > 1.0, np.sqrt(wsum), 1.0)
    out *= _rms_gain(x, out)
    if clamped:
        logger.warning("f0 ratio outside [%.2f, %.2f]; clamped", min_ratio, max_ratio)
    if not np.isfinite(lo_seen):
        lo_seen = hi_seen = 1.0
    return ShiftResult(
        clip=AudioClip(np.clip(out, -1.0, 1.0), sr),
        clamped=clamped,
        min_ratio=float(lo_seen),
        max_ratio=float(hi_seen),
    )
