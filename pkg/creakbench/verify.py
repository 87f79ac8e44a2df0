"""
Speaker-verification trials and equal error rate.

Every trial compares a manipulated embedding (test side) with an unmanipulated
embedding of a different utterance (enroll side). Same speaker gives a target
trial; a different speaker gives a non-target trial.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from creakbench.errors import DimensionError, InputError, TrialError
from creakbench.log import get_logger

logger = get_logger(__name__)

MAX_EXHAUSTIVE_TRIALS = 1_000_000


class PairingMode(str, Enum):
    EXHAUSTIVE = "exhaustive"
    BALANCED = "balanced"


@dataclass(frozen=True)
class TrialPolicy:
    """Exhaustive pairing, randomly capped at max_trials; balanced samples non-targets down to the target count."""

    mode: PairingMode = PairingMode.EXHAUSTIVE
    max_trials: int = MAX_EXHAUSTIVE_TRIALS
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", PairingMode(self.mode))
        if self.max_trials < 2:
            raise InputError(f"max_trials must be >= 2, got {self.max_trials}")

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "max_trials": self.max_trials, "seed": self.seed}


@dataclass(frozen=True)
class TrialScore:
    enroll_id: str
    test_id: str
    same_speaker: bool
    score: float


@dataclass(frozen=True)
class Trials:
    """Column-oriented trial list."""

    enroll_ids: np.ndarray
    test_ids: np.ndarray
    same_speaker: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.scores)

    def __iter__(self) -> Iterator[TrialScore]:
        for e, t, same, s in zip(self.enroll_ids, self.test_ids, self.same_speaker, self.scores):
            yield TrialScore(str(e), str(t), bool(same), float(s))

    @property
    def n_target(self) -> int:
        return int(np.count_nonzero(self.same_speaker))

    @property
    def n_nontarget(self) -> int:
        return len(self) - self.n_target

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "enroll_id": self.enroll_ids,
            "test_id": self.test_ids,
            "same_speaker": self.same_speaker.astype(bool),
            "score": self.scores,
        })


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    n_target: int
    n_nontarget: int


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """u.v / (|u| |v|)."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"Cannot compare vectors of shape {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise InputError("Cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise InputError("Cosine similarity undefined for a zero vector")
    return x / norms


# ==========================================================================
# EER
# ==========================================================================

def _score_arrays(scores: Trials | Iterable[TrialScore]) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(scores, Trials):
        return scores.scores.astype(np.float64), scores.same_speaker.astype(bool)
    items = list(scores)
    return (
        np.array([t.score for t in items], dtype=np.float64),
        np.array([t.same_speaker for t in items], dtype=bool),
    )


def eer(scores: Trials | Iterable[TrialScore]) -> EerResult:
    """
    Equal error rate by linear interpolation where FAR - FRR crosses zero.

    Thresholds sweep the sorted unique scores and +inf. At threshold t,
    FAR = fraction of non-targets scoring >= t and FRR = fraction of
    targets scoring < t.

    Raises:
        TrialError: no target or no non-target trials
    """
    values, target = _score_arrays(scores)
    if not np.all(np.isfinite(values)):
        raise InputError("Trial scores must be finite")
    tar = np.sort(values[target])
    non = np.sort(values[~target])
    if len(tar) == 0 or len(non) == 0:
        raise TrialError(f"Need target and non-target trials, got {len(tar)} and {len(non)}")

    thresholds = np.append(np.unique(values), np.inf)
    far = (len(non) - np.searchsorted(non, thresholds, side="left")) / len(non)
    frr = np.searchsorted(tar, thresholds, side="left") / len(tar)
    diff = far - frr

    i = int(np.argmax(diff <= 0))  # diff[0] > 0 and diff[-1] < 0
    if diff[i] == 0:
        rate, threshold = far[i], thresholds[i]
    else:
        w = diff[i - 1] / (diff[i - 1] - diff[i])
        rate = far[i - 1] + w * (far[i] - far[i - 1])
        hi = thresholds[i] if np.isfinite(thresholds[i]) else thresholds[i - 1]
        threshold = thresholds[i - 1] + w * (hi - thresholds[i - 1])
    return EerResult(float(rate), float(threshold), len(tar), len(non))


# ==========================================================================
# TRIALS
# ==========================================================================

def build_trials(
    originals: Mapping[str, tuple[str, Sequence[float]]],
    manipulated: Mapping[str, Sequence[float]],
    policy: TrialPolicy = TrialPolicy(),
) -> Trials:
    """
    Score manipulated embeddings against unmanipulated ones.

    Args:
        originals: utterance id -> (speaker id, unmanipulated embedding)
        manipulated: utterance id -> manipulated embedding (ids must appear in originals)
        policy: pairing policy; sampling is seeded by policy.seed

    Returns:
        Trials ordered by test id, then enroll id

    Raises:
        TrialError: empty manipulated map, or unknown manipulated ids
    """
    if not manipulated:
        raise TrialError("No manipulated embeddings to score")
    unknown = sorted(set(manipulated) - set(originals))
    if unknown:
        raise TrialError(f"Manipulated ids missing from originals: {unknown[:5]}")

    enroll_ids = np.array(sorted(originals))
    test_ids = np.array(sorted(manipulated))
    enroll_spk = np.array([originals[i][0] for i in enroll_ids])
    test_spk = np.array([originals[i][0] for i in test_ids])
    enroll = np.array([np.asarray(originals[i][1], dtype=np.float64) for i in enroll_ids])
    test = np.array([np.asarray(manipulated[i], dtype=np.float64) for i in test_ids])
    if enroll.ndim != 2 or test.ndim != 2 or enroll.shape[1] != test.shape[1]:
        raise DimensionError(f"Embedding shapes disagree: {enroll.shape} vs {test.shape}")

    speakers, counts = np.unique(enroll_spk, return_counts=True)
    lonely = sorted(set(speakers[counts == 1]) & set(test_spk))
    if lonely:
        logger.warning("%d speaker(s) with a single utterance contribute no target trials", len(lonely))

    scores = np.clip(_unit_rows(test) @ _unit_rows(enroll).T, -1.0, 1.0)
    valid = test_ids[:, None] != enroll_ids[None, :]
    same = test_spk[:, None] == enroll_spk[None, :]
    ti, ei = np.nonzero(valid)
    is_target = same[ti, ei]

    keep = _select(is_target, policy)
    ti, ei = ti[keep], ei[keep]
    return Trials(
        enroll_ids=enroll_ids[ei],
        test_ids=test_ids[ti],
        same_speaker=same[ti, ei],
        scores=scores[ti, ei],
    )


def _select(is_target: np.ndarray, policy: TrialPolicy) -> np.ndarray:
    """Sorted indices of the trials kept under the policy."""
    rng = np.random.default_rng(policy.seed)
    tar = np.flatnonzero(is_target)
    non = np.flatnonzero(~is_target)
    if policy.mode is PairingMode.BALANCED and len(non) > len(tar):
        non = np.sort(rng.choice(non, size=len(tar), replace=False))
    total = len(tar) + len(non)
    if total > policy.max_trials:
        n_tar = max(1, round(policy.max_trials * len(tar) / total)) if len(tar) else 0
        n_non = policy.max_trials - n_tar
        logger.info("Sampling %d of %d trials", policy.max_trials, total)
        tar = np.sort(rng.choice(tar, size=n_tar, replace=False))
        non = np.sort(rng.choice(non, size=n_non, replace=False))
    return np.sort(np.concatenate([tar, non]))


def eer_curve(results: Mapping[float, EerResult]) -> pd.DataFrame:
    """EER per shift factor, ordered by beta."""
    rows = [
        {"beta": beta, "eer": r.eer, "threshold": r.threshold, "n_target": r.n_target, "n_nontarget": r.n_nontarget}
        for beta, r in sorted(results.items())
    ]
    return pd.DataFrame(rows, columns=["beta", "eer", "threshold", "n_target", "n_nontarget"])
