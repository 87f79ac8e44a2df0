"""
Corpus pitch adaptation.

Each utterance's mean pitch is moved to its gender's mean, plus a per-utterance
Gaussian offset of b semitones standard deviation:

    delta = 12 * log2(gender_mean / utterance_mean)
    new_f0 = f0 * 2 ** ((delta + u * b) / 12),   u ~ N(0, 1)

The contour is resynthesized with TD-PSOLA and the result relabeled from its
voice-quality change, with pitch held at the original value.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from creakbench.audio.acoustics import VoiceFeatures, cpp, extract_features, h1_h2, hnr, jitter_pct
from creakbench.audio.core import AudioClip, read_wav, write_wav
from creakbench.audio.pitch import PitchContour, PitchRange, estimate_contour, mean_pitch
from creakbench.audio.psola import shift_pitch
from creakbench.audio.vad import trim_silence
from creakbench.creak import CreakLabeler, ExternalFirstLabeler
from creakbench.errors import CreakbenchError, InputError
from creakbench.log import get_logger
from creakbench.manifest import ManifestRow

logger = get_logger(__name__)

REFERENCE_GENDER_MEANS_HZ = {"male": 119.0, "female": 195.0}


@dataclass(frozen=True)
class GenderStats:
    mean_pitch_hz: dict[str, float]

    def __post_init__(self) -> None:
        for gender, value in self.mean_pitch_hz.items():
            if not value > 0:
                raise InputError(f"Mean pitch for '{gender}' must be positive, got {value}")

    @classmethod
    def reference_preset(cls) -> GenderStats:
        return cls(dict(REFERENCE_GENDER_MEANS_HZ))

    @classmethod
    def from_pitches(cls, pitches: list[tuple[str, float]]) -> GenderStats:
        """Per-gender means; genders without data fall back to the preset."""
        means = dict(REFERENCE_GENDER_MEANS_HZ)
        for gender in sorted({g for g, _ in pitches}):
            means[gender] = float(np.mean([p for g, p in pitches if g == gender]))
        return cls(means)

    def mean_for(self, gender: str) -> float:
        try:
            return self.mean_pitch_hz[gender]
        except KeyError:
            raise InputError(f"No mean pitch for gender '{gender}'") from None


@dataclass(frozen=True)
class AdaptParams:
    b: float = 2.0
    global_seed: int = 0
    pitch_range: PitchRange = PitchRange()
    vad_threshold_db: float = -35.0
    hangover_frames: int = 5

    def __post_init__(self) -> None:
        if self.b < 0:
            raise InputError(f"b must be >= 0, got {self.b}")


@dataclass
class AdaptRecord:
    id: str
    delta_semitones: float | None = None
    noise_u: float | None = None
    old_mean_pitch_hz: float | None = None
    new_mean_pitch_hz: float | None = None
    old_creak_prob: float | None = None
    new_creak_prob: float | None = None
    ratio_clamped: bool = False
    skipped: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


# ==========================================================================
# SEMITONE MATH
# ==========================================================================

def semitone_delta(class_mean_hz: float, utterance_mean_hz: float) -> float:
    """12 * log2(class mean / utterance mean)."""
    if class_mean_hz <= 0 or utterance_mean_hz <= 0:
        raise InputError("Mean pitches must be positive")
    return 12.0 * np.log2(class_mean_hz / utterance_mean_hz)


def shift_factor(delta: float, u: float, b: float) -> float:
    return float(2.0 ** ((delta + u * b) / 12.0))


def adapted_contour(contour: PitchContour, delta: float, u: float, b: float) -> PitchContour:
    """Every voiced frame times 2 ** ((delta + u*b) / 12)."""
    if delta == 0 and u * b == 0:
        return contour
    return contour.scaled(shift_factor(delta, u, b))


def utterance_seed(global_seed: int, utterance_id: str) -> int:
    """Stable per-utterance seed, independent of processing order."""
    digest = hashlib.blake2b(f"{global_seed}:{utterance_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def utterance_rng(params: AdaptParams, utterance_id: str) -> np.random.Generator:
    return np.random.default_rng(utterance_seed(params.global_seed, utterance_id))


# ==========================================================================
# UTTERANCE / CORPUS
# ==========================================================================

def speech_mean_pitch(clip: AudioClip, params: AdaptParams = AdaptParams()) -> tuple[AudioClip, PitchContour, float]:
    """VAD-trimmed speech, its contour and mean pitch."""
    speech = trim_silence(clip, params.vad_threshold_db, params.hangover_frames)
    contour = estimate_contour(speech, params.pitch_range)
    return speech, contour, mean_pitch(contour)


def adapt_utterance(
    clip: AudioClip,
    gender: str,
    stats: GenderStats,
    params: AdaptParams,
    rng: np.random.Generator,
    labeler: CreakLabeler | None = None,
    external_prob: float | None = None,
    relabel: bool = True,
    utterance_id: str = "",
) -> tuple[AudioClip, AdaptRecord]:
    """Shift one utterance to its gender mean (plus noise) and relabel it.

    Raises:
        NoSpeechError / UnvoicedError: utterance has no voiced speech
    """
    labeler = labeler or ExternalFirstLabeler()
    speech, speech_contour, old_mean = speech_mean_pitch(clip, params)
    old_features = VoiceFeatures(
        mean_pitch_hz=old_mean,
        h1h2_db=h1_h2(speech, speech_contour),
        hnr_db=hnr(speech, speech_contour),
        cpp_db=cpp(speech, speech_contour),
        voiced_fraction=float(np.mean(speech_contour.voiced)),
        jitter_pct=jitter_pct(speech, speech_contour),
    )
    old_label = labeler.label(old_features, external_prob)

    delta = semitone_delta(stats.mean_for(gender), old_mean)
    u = float(rng.standard_normal())

    contour = estimate_contour(clip, params.pitch_range)
    target = adapted_contour(contour, delta, u, params.b)
    result = shift_pitch(clip, contour, target)

    new_features = extract_features(result.clip, params.pitch_range, params.vad_threshold_db, params.hangover_frames)
    new_prob = labeler.relabel(old_label, old_features, new_features).prob if relabel else old_label.prob
    record = AdaptRecord(
        id=utterance_id,
        delta_semitones=float(delta),
        noise_u=u,
        old_mean_pitch_hz=old_mean,
        new_mean_pitch_hz=new_features.mean_pitch_hz,
        old_creak_prob=old_label.prob,
        new_creak_prob=new_prob,
        ratio_clamped=result.clamped,
    )
    return result.clip, record


@dataclass
class AdaptResult:
    rows: list[ManifestRow] = field(default_factory=list)
    records: list[AdaptRecord] = field(default_factory=list)

    @property
    def skipped(self) -> list[AdaptRecord]:
        return [r for r in self.records if r.skipped]


def corpus_stats(rows: list[ManifestRow], params: AdaptParams = AdaptParams(), workers: int = 1) -> GenderStats:
    """Gender means from manifest pitches, estimating missing ones from audio."""

    def pitch_of(row: ManifestRow) -> tuple[str, float] | None:
        if row.gender is None:
            return None
        if row.mean_pitch_hz is not None:
            return row.gender, row.mean_pitch_hz
        try:
            return row.gender, speech_mean_pitch(read_wav(row.resolved_audio_path), params)[2]
        except CreakbenchError as e:
            logger.debug("No pitch for %s: %s", row.id, e)
            return None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        pitches = [p for p in pool.map(pitch_of, rows) if p is not None]
    return GenderStats.from_pitches(pitches)


def adapt_corpus(
    rows: list[ManifestRow],
    out_dir: Path,
    params: AdaptParams = AdaptParams(),
    stats: GenderStats | None = None,
    labeler: CreakLabeler | None = None,
    relabel: bool = True,
    workers: int = 1,
) -> AdaptResult:
    """Adapt every row; output order and bytes do not depend on `workers`."""
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    stats = stats or corpus_stats(rows, params, workers)
    labeler = labeler or ExternalFirstLabeler()

    def process(row: ManifestRow) -> tuple[ManifestRow | None, AdaptRecord]:
        if row.gender is None:
            return None, AdaptRecord(id=row.id, skipped="missing gender")
        try:
            clip = read_wav(row.resolved_audio_path)
            adapted, record = adapt_utterance(
                clip, row.gender, stats, params, utterance_rng(params, row.id),
                labeler=labeler, external_prob=row.creak_prob, relabel=relabel, utterance_id=row.id,
            )
            rel_path = f"wav/{row.id}.wav"
            write_wav(adapted, out_dir / rel_path)
        except CreakbenchError as e:
            return None, AdaptRecord(id=row.id, skipped=str(e))

        extra = dict(row.extra)
        extra.update({
            "source_audio_path": str(row.resolved_audio_path),
            "adapted_path": rel_path,
            "delta_semitones": record.delta_semitones,
            "noise_u": record.noise_u,
        })
        new_row = ManifestRow(
            id=row.id,
            audio_path=rel_path,
            speaker_id=row.speaker_id,
            gender=row.gender,
            creak_prob=record.new_creak_prob,
            mean_pitch_hz=record.new_mean_pitch_hz,
            attrs=row.attrs,
            base_dir=out_dir,
            extra=extra,
        )
        return new_row, record

    result = AdaptResult()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for new_row, record in pool.map(process, rows):
            if record.skipped:
                logger.warning("Skipped %s: %s", record.id, record.skipped)
            if new_row is not None:
                result.rows.append(new_row)
            result.records.append(record)
    return result
