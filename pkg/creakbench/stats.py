"""
Correlation and slope statistics.

Slopes of creak probability on mean pitch are in creak-probability units per Hz:
a slope of -0.004 spans the full [0, 1] probability range over about 250 Hz.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats as sps

from creakbench.creak import THRESHOLDS, classify_creak
from creakbench.errors import DegenerateSeriesError, InputError
from creakbench.log import get_logger

logger = get_logger(__name__)

REL_VARIANCE_FLOOR = 1e-12
MEANINGFUL_R = 0.1
CREAK_PER_HZ = "creak probability per Hz"


@dataclass(frozen=True)
class CorrelationReport:
    group: str
    n: int
    r: float
    slope: float
    intercept: float
    x_name: str = "mean_pitch_hz"
    y_name: str = "creak_prob"
    units: str = CREAK_PER_HZ

    @property
    def meaningful(self) -> bool:
        return abs(self.r) >= MEANINGFUL_R

    @property
    def note(self) -> str:
        return "" if self.meaningful else "not meaningful"

    def to_dict(self) -> dict:
        return {**asdict(self), "note": self.note}


@dataclass(frozen=True)
class MetricSlope:
    metric: str
    slope: float
    intercept: float
    r: float
    n: int


def _series(xs: Sequence[float], ys: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise InputError(f"Series must be 1-D with equal lengths, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise InputError(f"Need at least 2 points, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("Series contain non-finite values")
    return x, y


def _degenerate(v: np.ndarray) -> bool:
    """Variance at or below 1e-12 of the mean square (or exactly zero)."""
    var = float(np.var(v))
    return var <= REL_VARIANCE_FLOOR * float(np.mean(v * v)) or var == 0.0


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation coefficient.

    Raises:
        DegenerateSeriesError: either series has (near-)zero variance
    """
    x, y = _series(xs, ys)
    if _degenerate(x) or _degenerate(y):
        raise DegenerateSeriesError()
    r = sps.pearsonr(x, y).statistic
    return float(np.clip(r, -1.0, 1.0))


def ols_slope(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Least-squares (slope, intercept) of y on x. A constant y is allowed."""
    x, y = _series(xs, ys)
    if _degenerate(x):
        raise DegenerateSeriesError()
    dx = x - x.mean()
    slope = float(np.dot(dx, y - y.mean()) / np.dot(dx, dx))
    return slope, float(y.mean() - slope * x.mean())


def correlation_report(
    group: str,
    xs: Sequence[float],
    ys: Sequence[float],
    x_name: str = "mean_pitch_hz",
    y_name: str = "creak_prob",
    units: str = CREAK_PER_HZ,
) -> CorrelationReport:
    x, y = _series(xs, ys)
    # Fixed summation order, so reports do not depend on row order
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    slope, intercept = ols_slope(x, y)
    report = CorrelationReport(group, len(x), pearson_r(x, y), slope, intercept, x_name, y_name, units)
    if not report.meaningful:
        logger.warning("Group '%s': |R| = %.3f < %.1f, slope not meaningful", group, abs(report.r), MEANINGFUL_R)
    return report


def creak_pitch_report(
    table: pd.DataFrame,
    group_by: str = "gender",
    x_col: str = "mean_pitch_hz",
    y_col: str = "creak_prob",
) -> list[CorrelationReport]:
    """
    Creak probability against mean pitch, one report per group plus overall.

    Args:
        table: One row per utterance with x_col, y_col and (for gender grouping) a gender column
        group_by: "gender" or "overall"

    Returns:
        Reports with groups in sorted order, "overall" last

    Raises:
        InputError: missing columns or unknown grouping
        DegenerateSeriesError: a group has no variance (message names the group)
    """
    if group_by not in ("gender", "overall"):
        raise InputError(f"Unknown grouping '{group_by}'. Use 'gender' or 'overall'.")
    needed = [x_col, y_col] + (["gender"] if group_by == "gender" else [])
    missing = [c for c in needed if c not in table.columns]
    if missing:
        raise InputError(f"Missing columns: {', '.join(missing)}")

    data = table.dropna(subset=[x_col, y_col])
    groups: list[tuple[str, pd.DataFrame]] = []
    if group_by == "gender":
        labelled = data.dropna(subset=["gender"])
        groups = [(str(g), part) for g, part in sorted(labelled.groupby("gender"), key=lambda kv: str(kv[0]))]
    groups.append(("overall", data))

    reports = []
    for name, part in groups:
        if len(part) < 2:
            logger.warning("Group '%s' has %d row(s); skipped", name, len(part))
            continue
        try:
            reports.append(correlation_report(name, part[x_col].to_numpy(), part[y_col].to_numpy(), x_col, y_col))
        except DegenerateSeriesError as e:
            raise DegenerateSeriesError(f"group '{name}': {e}") from e
    return reports


def reports_frame(reports: Sequence[CorrelationReport]) -> pd.DataFrame:
    rows = [
        {"group": r.group, "n": r.n, "R": r.r, "slope": r.slope, "intercept": r.intercept, "note": r.note}
        for r in reports
    ]
    return pd.DataFrame(rows, columns=["group", "n", "R", "slope", "intercept", "note"])


def metric_slope_vs_beta(records: Mapping[str, Sequence[tuple[float, float]]]) -> dict[str, MetricSlope]:
    """
    Slope and correlation of each metric's change against the shift factor.

    Args:
        records: metric name -> (beta, metric(beta) - metric(0)) pairs

    A metric whose change is constant gets R = 0 (no association).
    """
    out = {}
    for metric in sorted(records):
        pairs = np.asarray(records[metric], dtype=np.float64).reshape(-1, 2)
        betas, deltas = pairs[:, 0], pairs[:, 1]
        if len(np.unique(betas)) < 2:
            raise InputError(f"Metric '{metric}': need at least 2 distinct beta values")
        slope, intercept = ols_slope(betas, deltas)
        r = 0.0 if _degenerate(deltas) else pearson_r(betas, deltas)
        out[metric] = MetricSlope(metric, slope, intercept, r, len(pairs))
    return out


def pitch_distribution(
    table: pd.DataFrame,
    bins: int | Sequence[float] = 20,
    thresholds: dict[str, float] = THRESHOLDS,
) -> pd.DataFrame:
    """
    Mean-pitch histograms per gender, split by binary creak class.

    Bin edges are shared across all groups. Rows without a known gender are ignored.

    Returns:
        DataFrame with columns group, creaky, bin_lo, bin_hi, count
    """
    missing = [c for c in ("gender", "mean_pitch_hz", "creak_prob") if c not in table.columns]
    if missing:
        raise InputError(f"Missing columns: {', '.join(missing)}")
    data = table.dropna(subset=["gender", "mean_pitch_hz", "creak_prob"])
    data = data[data["gender"].isin(list(thresholds))]
    columns = ["group", "creaky", "bin_lo", "bin_hi", "count"]
    if data.empty:
        return pd.DataFrame(columns=columns)

    pitches = data["mean_pitch_hz"].to_numpy(dtype=np.float64)
    edges = np.histogram_bin_edges(pitches, bins=bins)
    creaky = np.array([classify_creak(p, g, thresholds) for p, g in zip(data["creak_prob"], data["gender"])])

    rows = []
    for gender in sorted(data["gender"].unique()):
        in_group = (data["gender"] == gender).to_numpy()
        for flag in (False, True):
            counts, _ = np.histogram(pitches[in_group & (creaky == flag)], bins=edges)
            rows.extend(
                {"group": gender, "creaky": flag, "bin_lo": lo, "bin_hi": hi, "count": int(c)}
                for lo, hi, c in zip(edges[:-1], edges[1:], counts)
            )
    return pd.DataFrame(rows, columns=columns)
