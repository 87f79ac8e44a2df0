"""Fit the proxy creak labeler to external labels."""
from pathlib import Path

from rich.console import Console

from creakbench.audio.acoustics import VoiceFeatures
from creakbench.creak import FEATURES, calibrate
from creakbench.manifest import read_table

FEATURE_COLUMNS = ["mean_pitch_hz", "h1h2_db", "hnr_db", "cpp_db", "jitter_pct"]


def run_calibrate(features: Path, out: Path, external_only: bool = True) -> None:
    """
    Fit weights and z-score stats from an analyze CSV and write the calibration file.

    With external_only, only rows whose creak_prob came from an external labeler are used.
    """
    console = Console(stderr=True)
    data = read_table(features, FEATURE_COLUMNS + ["creak_prob"])
    if external_only and "creak_source" in data.columns:
        data = data[data["creak_source"] == "external"]
    data = data.dropna(subset=FEATURE_COLUMNS + ["creak_prob"])

    labeled = [
        (
            VoiceFeatures(
                mean_pitch_hz=row.mean_pitch_hz,
                h1h2_db=row.h1h2_db,
                hnr_db=row.hnr_db,
                cpp_db=row.cpp_db,
                voiced_fraction=getattr(row, "voiced_fraction", 1.0),
                jitter_pct=row.jitter_pct,
            ),
            float(row.creak_prob),
        )
        for row in data.itertuples(index=False)
    ]
    calib = calibrate(labeled)
    out.parent.mkdir(parents=True, exist_ok=True)
    calib.save(out)

    console.print(f"[green]Calibrated on {len(labeled)} utterance(s)[/] -> {out}")
    console.print("  bias " + f"{calib.bias:+.3f}; " + ", ".join(f"{n} {calib.weights[n]:+.3f}" for n in FEATURES))
