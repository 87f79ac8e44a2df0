"""
Creak-probability labeling.

A logistic proxy over z-scored voice features stands in for an external creak
detector. Labels supplied by an external tool (via the manifest) take
precedence; the `source` field records which one produced a label.

Calibration file format (version 1), one `key = value` per line:

    creakbench-calibration 1
    bias = -1.0
    weight.pitch = -1.0       # one weight/mean/std triple per feature:
    mean.pitch = 150.0        #   pitch, h1h2, hnr, cpp, jitter
    std.pitch = 50.0
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit, logit

from creakbench.audio.acoustics import VoiceFeatures
from creakbench.errors import CalibrationError, InputError

CALIBRATION_HEADER = "creakbench-calibration"
CALIBRATION_VERSION = 1
FEATURES = ("pitch", "h1h2", "hnr", "cpp", "jitter")
MIN_CALIBRATION_SAMPLES = 20
PROB_EPS = 1e-6

# Gender-specific thresholds on creak probability (dataset means)
THRESHOLDS = {"male": 0.5, "female": 0.3}


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"


class LabelSource(str, Enum):
    EXTERNAL = "external"
    PROXY = "proxy"


@dataclass(frozen=True)
class CreakLabel:
    prob: float
    source: LabelSource

    def __post_init__(self) -> None:
        if not 0.0 <= self.prob <= 1.0:
            raise InputError(f"Creak probability {self.prob} outside [0, 1]")


def feature_vector(features: VoiceFeatures) -> np.ndarray:
    """Features in FEATURES order."""
    return np.array([
        features.mean_pitch_hz,
        features.h1h2_db,
        features.hnr_db,
        features.cpp_db,
        features.jitter_pct,
    ])


@dataclass(frozen=True)
class CreakCalibration:
    """Logistic weights over z-scored features, plus the z-score stats."""

    weights: dict[str, float] = field(default_factory=lambda: {
        "pitch": -1.0, "h1h2": -1.0, "hnr": -1.0, "cpp": -1.0, "jitter": 1.0,
    })
    bias: float = -1.0
    means: dict[str, float] = field(default_factory=lambda: {
        "pitch": 150.0, "h1h2": 6.0, "hnr": 15.0, "cpp": 15.0, "jitter": 1.0,
    })
    stds: dict[str, float] = field(default_factory=lambda: {
        "pitch": 50.0, "h1h2": 4.0, "hnr": 6.0, "cpp": 5.0, "jitter": 1.0,
    })

    def __post_init__(self) -> None:
        for name in FEATURES:
            if name not in self.weights or name not in self.means or name not in self.stds:
                raise CalibrationError(f"Calibration missing feature '{name}'")
            if not np.isfinite(self.weights[name]) or not self.stds[name] > 0:
                raise CalibrationError(f"Invalid calibration entry for '{name}'")
        if not np.isfinite(self.bias):
            raise CalibrationError("Calibration bias must be finite")

    def zscores(self, values: np.ndarray) -> np.ndarray:
        means = np.array([self.means[n] for n in FEATURES])
        stds = np.array([self.stds[n] for n in FEATURES])
        return (values - means) / stds

    @property
    def weight_vector(self) -> np.ndarray:
        return np.array([self.weights[n] for n in FEATURES])

    # --- persistence ---

    def to_text(self) -> str:
        lines = [f"{CALIBRATION_HEADER} {CALIBRATION_VERSION}", f"bias = {self.bias!r}"]
        for name in FEATURES:
            lines.append(f"weight.{name} = {self.weights[name]!r}")
            lines.append(f"mean.{name} = {self.means[name]!r}")
            lines.append(f"std.{name} = {self.stds[name]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> CreakCalibration:
        lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines or lines[0] != f"{CALIBRATION_HEADER} {CALIBRATION_VERSION}":
            raise CalibrationError("Not a version-1 creak calibration file")
        values: dict[str, float] = {}
        for ln in lines[1:]:
            key, sep, value = ln.partition("=")
            if not sep:
                raise CalibrationError(f"Malformed calibration line: '{ln}'")
            try:
                values[key.strip()] = float(value)
            except ValueError as e:
                raise CalibrationError(f"Non-numeric calibration value: '{ln}'") from e
        try:
            return cls(
                weights={n: values[f"weight.{n}"] for n in FEATURES},
                bias=values["bias"],
                means={n: values[f"mean.{n}"] for n in FEATURES},
                stds={n: values[f"std.{n}"] for n in FEATURES},
            )
        except KeyError as e:
            raise CalibrationError(f"Calibration missing key {e}") from e

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Path) -> CreakCalibration:
        try:
            return cls.from_text(Path(path).read_text())
        except OSError as e:
            raise CalibrationError(f"Could not read calibration {path}: {e}") from e


def proxy_creak_prob(features: VoiceFeatures, calib: CreakCalibration = CreakCalibration()) -> CreakLabel:
    """logistic(bias + w . z) over the five z-scored features."""
    z = calib.zscores(feature_vector(features))
    prob = float(expit(calib.bias + calib.weight_vector @ z))
    return CreakLabel(float(np.clip(prob, PROB_EPS, 1.0 - PROB_EPS)), LabelSource.PROXY)


def relabel_after_shift(
    label: CreakLabel,
    before: VoiceFeatures,
    after: VoiceFeatures,
    calib: CreakCalibration = CreakCalibration(),
) -> CreakLabel:
    """
    Carry a label across a pitch shift.

    The logit moves by the proxy weights times the change in the z-scored
    voice-quality features; the pitch term is held at its pre-shift value,
    so the deliberate f0 move does not feed back into the label.
    """
    delta = calib.zscores(feature_vector(after)) - calib.zscores(feature_vector(before))
    delta[FEATURES.index("pitch")] = 0.0
    anchored = logit(float(np.clip(label.prob, PROB_EPS, 1.0 - PROB_EPS)))
    prob = float(expit(anchored + calib.weight_vector @ delta))
    return CreakLabel(float(np.clip(prob, PROB_EPS, 1.0 - PROB_EPS)), label.source)


def classify_creak(prob: float, gender: Gender | str, thresholds: dict[str, float] = THRESHOLDS) -> bool:
    """Binary creak decision with the gender-specific threshold."""
    return prob >= thresholds[Gender(gender).value]


def calibrate(labeled: Sequence[tuple[VoiceFeatures, float]]) -> CreakCalibration:
    """Fit z-score stats and least-squares weights on logit(prob)."""
    if len(labeled) < MIN_CALIBRATION_SAMPLES:
        raise CalibrationError(f"Need at least {MIN_CALIBRATION_SAMPLES} samples, got {len(labeled)}")
    x = np.array([feature_vector(f) for f, _ in labeled])
    y = np.array([p for _, p in labeled], dtype=np.float64)
    if np.var(y) <= 0:
        raise CalibrationError("Creak labels have no variance")

    # Canonical row order makes the fit independent of input order
    order = np.lexsort(np.column_stack([x, y]).T[::-1])
    x, y = x[order], y[order]

    means = x.mean(axis=0)
    stds = x.std(axis=0)
    if np.any(stds <= 0):
        constant = [n for n, s in zip(FEATURES, stds) if s <= 0]
        raise CalibrationError(f"Constant features: {', '.join(constant)}")
    z = (x - means) / stds
    target = logit(np.clip(y, PROB_EPS, 1.0 - PROB_EPS))
    design = np.column_stack([np.ones(len(z)), z])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)

    return CreakCalibration(
        weights={n: float(w) for n, w in zip(FEATURES, coef[1:])},
        bias=float(coef[0]),
        means={n: float(m) for n, m in zip(FEATURES, means)},
        stds={n: float(s) for n, s in zip(FEATURES, stds)},
    )


# ==========================================================================
# LABELERS
# ==========================================================================

class CreakLabeler(ABC):
    """Produces an utterance-level creak label."""

    @abstractmethod
    def label(self, features: VoiceFeatures, external_prob: float | None = None) -> CreakLabel:
        """
        Label one utterance.

        Args:
            features: Voice features of the (VAD-trimmed) utterance
            external_prob: Probability from an external tool, if the manifest has one

        Returns:
            CreakLabel with provenance
        """

    def relabel(self, label: CreakLabel, before: VoiceFeatures, after: VoiceFeatures) -> CreakLabel:
        """Label of a pitch-shifted utterance; see relabel_after_shift."""
        return relabel_after_shift(label, before, after)


class ProxyLabeler(CreakLabeler):
    """Always uses the logistic proxy."""

    def __init__(self, calib: CreakCalibration | None = None):
        self.calib = calib or CreakCalibration()

    def label(self, features: VoiceFeatures, external_prob: float | None = None) -> CreakLabel:
        return proxy_creak_prob(features, self.calib)

    def relabel(self, label: CreakLabel, before: VoiceFeatures, after: VoiceFeatures) -> CreakLabel:
        return relabel_after_shift(label, before, after, self.calib)


class ExternalFirstLabeler(ProxyLabeler):
    """External label when present, proxy otherwise."""

    def label(self, features: VoiceFeatures, external_prob: float | None = None) -> CreakLabel:
        if external_prob is not None:
            return CreakLabel(float(external_prob), LabelSource.EXTERNAL)
        return proxy_creak_prob(features, self.calib)


def get_labeler(config: dict | None = None, mode: str = "external-first") -> CreakLabeler:
    """
    Factory for the configured labeler.

    Args:
        config: The 'creak' config section (may name a calibration file)
        mode: "external-first" or "proxy"

    Raises:
        ValueError: If mode is unknown
    """
    config = config or {}
    calib_path = config.get("calibration")
    calib = CreakCalibration.load(Path(calib_path)) if calib_path else CreakCalibration()
    if mode == "external-first":
        return ExternalFirstLabeler(calib)
    if mode == "proxy":
        return ProxyLabeler(calib)
    raise ValueError(f"Unknown labeler mode: {mode}. Use 'external-first' or 'proxy'.")
