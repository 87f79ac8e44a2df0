"""EER per shift factor, from a trials CSV or from embedding files."""
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.table import Table

from creakbench.errors import InputError
from creakbench.manifest import read_embeddings, read_table, write_table
from creakbench.verify import PairingMode, TrialPolicy, Trials, build_trials, eer, eer_curve


def _trials_from_csv(path: Path) -> dict[float, Trials]:
    """Columns: score, same_speaker, optional beta / enroll_id / test_id."""
    data = read_table(path, ["score", "same_speaker"])
    betas = data["beta"].to_numpy(dtype=float) if "beta" in data.columns else np.zeros(len(data))
    labels = data["same_speaker"].map(lambda v: str(v).strip().lower() in ("1", "true", "yes"))
    out = {}
    for beta in sorted(set(betas)):
        part = data[betas == beta]
        out[float(beta)] = Trials(
            enroll_ids=part["enroll_id"].astype(str).to_numpy() if "enroll_id" in part else np.array([""] * len(part)),
            test_ids=part["test_id"].astype(str).to_numpy() if "test_id" in part else np.array([""] * len(part)),
            same_speaker=labels[betas == beta].to_numpy(dtype=bool),
            scores=part["score"].to_numpy(dtype=float),
        )
    return out


def _trials_from_embeddings(originals: Path, manipulated: Path, policy: TrialPolicy) -> dict[float, Trials]:
    orig = read_embeddings(originals, require_attrs=False)
    manip = read_embeddings(manipulated, require_attrs=False)
    reference = {uid: (spk, emb) for uid, spk, emb in zip(orig.ids, orig.speaker_ids, orig.embeddings)}
    betas = manip.betas if manip.betas is not None else np.zeros(len(manip))
    out = {}
    for beta in sorted(set(betas)):
        mask = betas == beta
        shifted = {uid: emb for uid, emb, keep in zip(manip.ids, manip.embeddings, mask) if keep}
        out[float(beta)] = build_trials(reference, shifted, policy)
    return out


def run_eer(
    out: Path,
    trials: Path | None = None,
    originals: Path | None = None,
    manipulated: Path | None = None,
    mode: str = "exhaustive",
    max_trials: int = 1_000_000,
    seed: int = 0,
) -> None:
    """Write beta, eer, threshold, n_target, n_nontarget rows."""
    console = Console(stderr=True)
    if trials is not None:
        if originals is not None or manipulated is not None:
            raise InputError("Give either --trials or --originals/--manipulated, not both")
        by_beta = _trials_from_csv(trials)
    elif originals is not None and manipulated is not None:
        policy = TrialPolicy(PairingMode(mode), max_trials, seed)
        by_beta = _trials_from_embeddings(originals, manipulated, policy)
    else:
        raise InputError("Need --trials, or both --originals and --manipulated")
    if not by_beta:
        raise InputError("No trials to score")

    curve = eer_curve({beta: eer(t) for beta, t in by_beta.items()})
    write_table(curve, out)

    table = Table(title="EER by creak shift")
    for col in ("beta", "EER", "targets", "non-targets"):
        table.add_column(col, justify="right")
    for row in curve.itertuples(index=False):
        table.add_row(f"{row.beta:+.2f}", f"{row.eer:.4f}", str(row.n_target), str(row.n_nontarget))
    console.print(table)
