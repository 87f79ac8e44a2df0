"""
Feature extraction and creak labeling for a manifest.

Writes one CSV row per utterance; rows that fail are logged and skipped.
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd
from rich.console import Console

from creakbench.audio.acoustics import extract_features
from creakbench.audio.core import read_wav
from creakbench.audio.pitch import PitchRange
from creakbench.config import get_config
from creakbench.creak import Gender, classify_creak, get_labeler
from creakbench.errors import CreakbenchError
from creakbench.log import get_logger
from creakbench.manifest import ManifestRow, read_manifest, write_table

logger = get_logger(__name__)

COLUMNS = [
    "id", "speaker_id", "gender", "mean_pitch_hz", "h1h2_db", "hnr_db", "cpp_db",
    "voiced_fraction", "jitter_pct", "creak_prob", "creak_source", "is_creaky",
]


def run_analyze(
    manifest: Path,
    out: Path,
    calibration: Path | None = None,
    labeler_mode: str = "external-first",
    workers: int = 1,
) -> int:
    """Analyze every utterance; returns the number of skipped rows."""
    console = Console(stderr=True)
    config = get_config()
    creak_cfg = dict(config["creak"])
    if calibration is not None:
        creak_cfg["calibration"] = str(calibration)
    labeler = get_labeler(creak_cfg, labeler_mode)
    thresholds = {"male": creak_cfg["male_threshold"], "female": creak_cfg["female_threshold"]}
    pitch_range = PitchRange(config["pitch"]["f_min_hz"], config["pitch"]["f_max_hz"])
    vad = config["vad"]

    rows = read_manifest(manifest)

    def analyze(row: ManifestRow) -> dict | None:
        try:
            features = extract_features(
                read_wav(row.resolved_audio_path), pitch_range, vad["threshold_db"], vad["hangover_frames"]
            )
        except CreakbenchError as e:
            logger.warning("Skipped %s: %s", row.id, e)
            return None
        label = labeler.label(features, row.creak_prob)
        known = row.gender in {g.value for g in Gender}
        return {
            "id": row.id,
            "speaker_id": row.speaker_id,
            "gender": row.gender,
            **features.to_dict(),
            "creak_prob": label.prob,
            "creak_source": label.source.value,
            "is_creaky": classify_creak(label.prob, row.gender, thresholds) if known else None,
        }

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(analyze, rows))
    table = pd.DataFrame([r for r in results if r is not None], columns=COLUMNS)
    write_table(table, out)

    skipped = sum(r is None for r in results)
    console.print(f"[green]Analyzed {len(table)} utterance(s)[/] -> {out}")
    if skipped:
        console.print(f"[yellow]Skipped {skipped} row(s); see log above[/]")
    return skipped
