"""Corpus pitch adaptation command."""
from pathlib import Path

from rich.console import Console
from rich.table import Table

from creakbench.adapt import AdaptParams, GenderStats, adapt_corpus
from creakbench.audio.pitch import PitchRange
from creakbench.config import get_config
from creakbench.creak import get_labeler
from creakbench.errors import InputError
from creakbench.manifest import has_gender, read_manifest, write_jsonl, write_manifest

MANIFEST_NAME = "manifest.jsonl"
RECORDS_NAME = "adapt_records.jsonl"


def run_adapt(
    manifest: Path,
    out_dir: Path,
    b: float | None = None,
    seed: int = 0,
    preset: str | None = None,
    relabel: bool = True,
    workers: int = 1,
) -> None:
    """Adapt a manifest into out_dir (wav/, manifest.jsonl, adapt_records.jsonl)."""
    console = Console(stderr=True)
    config = get_config()
    adapt_cfg = config["adapt"]
    preset = preset or adapt_cfg["preset"]
    if preset not in ("data", "reference"):
        raise InputError(f"Unknown preset '{preset}'. Use 'data' or 'reference'.")

    rows = read_manifest(manifest)
    if rows and not has_gender(rows):
        raise InputError(f"{manifest}: no gender labels; adaptation needs a 'gender' field")

    params = AdaptParams(
        b=adapt_cfg["b"] if b is None else b,
        global_seed=seed,
        pitch_range=PitchRange(config["pitch"]["f_min_hz"], config["pitch"]["f_max_hz"]),
        vad_threshold_db=config["vad"]["threshold_db"],
        hangover_frames=config["vad"]["hangover_frames"],
    )
    stats = GenderStats.reference_preset() if preset == "reference" else None
    result = adapt_corpus(
        rows, out_dir, params, stats=stats, labeler=get_labeler(config["creak"]), relabel=relabel, workers=workers
    )

    write_manifest(result.rows, out_dir / MANIFEST_NAME)
    write_jsonl((r.to_dict() for r in result.records), out_dir / RECORDS_NAME)

    table = Table(title="Adaptation")
    table.add_column("Rows", justify="right")
    table.add_column("Adapted", justify="right")
    table.add_column("Skipped", justify="right")
    table.add_column("b (st)", justify="right")
    table.add_row(str(len(rows)), str(len(result.rows)), str(len(result.skipped)), f"{params.b:g}")
    console.print(table)
    console.print(f"Manifest: {out_dir / MANIFEST_NAME}")
