"""Creak/pitch correlation report from an analyze CSV."""
from pathlib import Path

from rich.console import Console
from rich.table import Table

from creakbench.config import get_section
from creakbench.manifest import read_table, write_table
from creakbench.stats import creak_pitch_report, pitch_distribution, reports_frame


def run_corr(
    features: Path,
    out: Path,
    group_by: str = "gender",
    histogram: Path | None = None,
    bins: int = 20,
) -> None:
    """Write per-group R / slope rows and, optionally, the pitch histogram."""
    console = Console(stderr=True)
    required = ["mean_pitch_hz", "creak_prob"] + (["gender"] if group_by == "gender" else [])
    data = read_table(features, required)
    reports = creak_pitch_report(data, group_by)
    write_table(reports_frame(reports), out)

    table = Table(title="Creak probability vs mean pitch")
    for col in ("Group", "n", "R", "Slope (/Hz)", "Note"):
        table.add_column(col, justify="left" if col in ("Group", "Note") else "right")
    for r in reports:
        table.add_row(r.group, str(r.n), f"{r.r:+.3f}", f"{r.slope:+.5f}", r.note)
    console.print(table)

    if histogram is not None:
        creak_cfg = get_section("creak")
        thresholds = {"male": creak_cfg["male_threshold"], "female": creak_cfg["female_threshold"]}
        write_table(pitch_distribution(read_table(features, ["gender"]), bins, thresholds), histogram)
        console.print(f"Histogram: {histogram}")
