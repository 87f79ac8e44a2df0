"""
Synthetic disentanglement experiment.

Speakers are drawn from a known latent structure (pitch, creak and d-2 identity
factors) mixed into embeddings by a random rotation, with the creak factor
down-weighted. The pitch of any embedding can be read back exactly. Three flows
are trained:

    base      correlated corpus (creak tracks pitch)
    adapted   decorrelated corpus (pitch re-centred per utterance)
    combined  base plus a fraction of the adapted corpus

Held-out embeddings are then shifted in creak over the beta grid and scored
for speaker verification, alongside the slope of the read-back pitch and creak.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.special import ndtr
from scipy.stats import ortho_group

from creakbench.errors import InputError, NumericalError
from creakbench.flow.model import CREAK_INDEX, PITCH_INDEX, FlowModel, TraceMethod, manipulate, shift_creak_array
from creakbench.flow.solver import SolverConfig
from creakbench.flow.train import TrainHyper, train
from creakbench.log import get_logger
from creakbench.stats import metric_slope_vs_beta
from creakbench.verify import EerResult, TrialPolicy, build_trials, eer

logger = get_logger(__name__)

BETA_GRID = tuple(round(-1.25 + 0.25 * i, 2) for i in range(11))
SYSTEMS = ("base", "adapted", "combined")

def copula_scale(creak_obs_noise: float = 0.0) -> float:
    """Pearson(X, Phi(Y + e)) / corr(X, Y) for standard normal X, Y and e ~ N(0, noise^2).

    With s^2 = 1 + noise^2: 1 / sqrt((1 + s^2) * arcsin(s^2 / (1 + s^2))),
    which is sqrt(3 / pi) without noise.
    """
    s2 = 1.0 + creak_obs_noise**2
    return 1.0 / math.sqrt((1.0 + s2) * math.asin(s2 / (1.0 + s2)))


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """
    Generative settings of the synthetic corpus.

    pitch_obs_noise and creak_obs_noise are the measurement errors of the two
    labelled attributes (pitch in latent units, creak on the probit scale).
    creak_weight scales the creak factor inside the embedding; the identity
    and pitch factors have weight 1.
    """

    n_speakers: int = 200
    utterances_per_speaker: int = 5
    d: int = 8
    rho: float = -0.7
    sigma: float = 0.05
    pitch_obs_noise: float = 1.0
    creak_obs_noise: float = 0.3
    creak_weight: float = 0.35
    pitch_sd_octaves: float = 0.25
    identity_mixing: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not -1.0 < self.rho < 1.0:
            raise InputError(f"rho must lie in (-1, 1), got {self.rho}")
        if abs(self.rho) >= copula_scale(self.creak_obs_noise):
            raise InputError(f"rho={self.rho} is out of reach with creak_obs_noise={self.creak_obs_noise}")
        if self.d < 3:
            raise InputError(f"d must be >= 3 (pitch, creak and at least one identity factor), got {self.d}")
        if self.n_speakers < 2 or self.utterances_per_speaker < 1:
            raise InputError("Need at least 2 speakers and 1 utterance per speaker")
        if self.sigma < 0 or self.pitch_obs_noise < 0 or self.creak_obs_noise < 0 or not self.pitch_sd_octaves > 0:
            raise InputError("Noise levels must be >= 0 and pitch_sd_octaves > 0")
        if not self.creak_weight > 0:
            raise InputError(f"creak_weight must be positive, got {self.creak_weight}")

    @property
    def factor_weights(self) -> np.ndarray:
        weights = np.ones(self.d)
        weights[1] = self.creak_weight
        return weights


@dataclass
class SyntheticCorpus:
    embeddings: np.ndarray
    attrs: np.ndarray
    latents: np.ndarray
    speaker_ids: np.ndarray
    utterance_ids: np.ndarray
    mixing: np.ndarray
    offset: np.ndarray
    spec: SyntheticCorpusSpec

    def __len__(self) -> int:
        return len(self.embeddings)

    @property
    def pitch_latent(self) -> np.ndarray:
        return self.latents[:, 0]

    @property
    def creak_prob(self) -> np.ndarray:
        return self.attrs[:, CREAK_INDEX]

    def subset(self, mask: np.ndarray) -> SyntheticCorpus:
        return replace(
            self,
            embeddings=self.embeddings[mask],
            attrs=self.attrs[mask],
            latents=self.latents[mask],
            speaker_ids=self.speaker_ids[mask],
            utterance_ids=self.utterance_ids[mask],
        )

    def rows(self) -> list[dict]:
        """Embedding-file rows: id, speaker_id, embedding, attrs."""
        return [
            {"id": str(u), "speaker_id": str(s), "embedding": [float(v) for v in e], "attrs": [float(v) for v in a]}
            for u, s, e, a in zip(self.utterance_ids, self.speaker_ids, self.embeddings, self.attrs)
        ]


def _measured_attrs(latents: np.ndarray, noise: np.ndarray, spec: SyntheticCorpusSpec) -> np.ndarray:
    """[0, 0, 0, 0, noisy pitch measurement, Phi(creak latent + probit noise)]."""
    attrs = np.zeros((len(latents), 6))
    attrs[:, PITCH_INDEX] = latents[:, 0] + spec.pitch_obs_noise * noise[:, 0]
    attrs[:, CREAK_INDEX] = ndtr(latents[:, 1] + spec.creak_obs_noise * noise[:, 1])
    return attrs


def generate_corpus(spec: SyntheticCorpusSpec = SyntheticCorpusSpec(), rng: np.random.Generator | None = None) -> SyntheticCorpus:
    """
    Draw speakers and utterances.

    Per speaker: pitch p ~ N(0, 1) (in units of pitch_sd_octaves), a creak
    latent correlated with p so that Pearson(p, creak attribute) = rho, and
    d-2 identity factors. Each utterance adds N(0, sigma^2) to every latent.
    Embedding = W @ latent + offset with W = Q diag(factor_weights), Q a
    random rotation (identity when identity_mixing).
    """
    rng = rng or np.random.default_rng(spec.seed)
    d, n_spk, n_utt = spec.d, spec.n_speakers, spec.utterances_per_speaker
    rotation = np.eye(d) if spec.identity_mixing else ortho_group.rvs(d, random_state=rng)
    mixing = rotation @ np.diag(spec.factor_weights)

    r = spec.rho / copula_scale(spec.creak_obs_noise)
    pitch = rng.standard_normal(n_spk)
    creak = r * pitch + math.sqrt(1.0 - r * r) * rng.standard_normal(n_spk)
    identity = rng.standard_normal((n_spk, d - 2))
    speaker_latent = np.column_stack([pitch, creak, identity])

    latents = np.repeat(speaker_latent, n_utt, axis=0) + spec.sigma * rng.standard_normal((n_spk * n_utt, d))
    attrs = _measured_attrs(latents, rng.standard_normal((len(latents), 2)), spec)
    offset = np.zeros(d)
    width = len(str(n_spk - 1))
    speaker_ids = np.repeat([f"spk{i:0{width}d}" for i in range(n_spk)], n_utt)
    utterance_ids = np.array([f"{s}_{j}" for s, j in zip(speaker_ids, np.tile(np.arange(n_utt), n_spk))])
    return SyntheticCorpus(
        embeddings=latents @ mixing.T + offset,
        attrs=attrs,
        latents=latents,
        speaker_ids=speaker_ids,
        utterance_ids=utterance_ids,
        mixing=mixing,
        offset=offset,
        spec=spec,
    )


def decorrelate_corpus(corpus: SyntheticCorpus, b: float = 2.0, rng: np.random.Generator | None = None) -> SyntheticCorpus:
    """
    Re-centre every utterance's pitch on the population mean plus b-semitone noise.

    The pitch latent becomes ((b/12) / pitch_sd_octaves) * u with u ~ N(0, 1)
    per utterance; the pitch attribute is re-measured, creak is untouched and
    embeddings are recomputed through W.
    """
    if b < 0:
        raise InputError(f"b must be >= 0, got {b}")
    spec = corpus.spec
    rng = rng or np.random.default_rng([spec.seed, 1])
    latents = corpus.latents.copy()
    latents[:, 0] = (b / 12.0) / spec.pitch_sd_octaves * rng.standard_normal(len(latents))
    attrs = corpus.attrs.copy()
    attrs[:, PITCH_INDEX] = latents[:, 0] + spec.pitch_obs_noise * rng.standard_normal(len(latents))
    return replace(corpus, latents=latents, attrs=attrs, embeddings=latents @ corpus.mixing.T + corpus.offset)


def _latent(embedding: np.ndarray, mixing: np.ndarray, offset: np.ndarray | None) -> np.ndarray:
    w = np.asarray(mixing, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InputError(f"Mixing matrix must be square, got {w.shape}")
    if np.linalg.cond(w) > 1.0 / np.finfo(np.float64).eps:
        raise InputError("Mixing matrix is singular")
    e = np.asarray(embedding, dtype=np.float64)
    if offset is not None:
        e = e - offset
    return np.linalg.solve(w, e.T).T


def implied_pitch(embedding: np.ndarray, mixing: np.ndarray, offset: np.ndarray | None = None) -> np.ndarray | float:
    """Pitch latent read back as (W^-1 (e - offset))[0]; scalar for a single embedding."""
    z = _latent(embedding, mixing, offset)
    return z[..., 0] if z.ndim > 1 else float(z[0])


def implied_creak(embedding: np.ndarray, mixing: np.ndarray, offset: np.ndarray | None = None) -> np.ndarray | float:
    """Creak probability read back as Phi((W^-1 (e - offset))[1])."""
    z = _latent(embedding, mixing, offset)
    return ndtr(z[..., 1]) if z.ndim > 1 else float(ndtr(z[1]))


def split_speakers(corpus: SyntheticCorpus, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Speaker-disjoint (train_mask, test_mask)."""
    speakers = np.unique(corpus.speaker_ids)
    order = np.random.default_rng([seed, 2]).permutation(len(speakers))
    n_test = max(1, int(math.ceil(test_fraction * len(speakers))))
    if n_test >= len(speakers):
        raise InputError("Split leaves no training speakers")
    test_mask = np.isin(corpus.speaker_ids, speakers[order[:n_test]])
    return ~test_mask, test_mask


# ==========================================================================
# EXPERIMENT
# ==========================================================================

@dataclass(frozen=True)
class FlowExperimentHyper:
    epochs: int = 60
    learning_rate: float = 3e-3
    batch_size: int = 200
    hidden: int = 64
    steps: int = 10
    trace: TraceMethod = TraceMethod.EXACT
    seed: int = 0
    b: float = 2.0
    combined_ratio: float = 1.0
    test_fraction: float = 0.2
    betas: tuple[float, ...] = BETA_GRID
    trial_policy: TrialPolicy = field(default_factory=TrialPolicy)

    def __post_init__(self) -> None:
        object.__setattr__(self, "trace", TraceMethod(self.trace))
        if not 0.0 < self.combined_ratio <= 1.0:
            raise InputError(f"combined_ratio must lie in (0, 1], got {self.combined_ratio}")
        if not 0.0 < self.test_fraction < 1.0:
            raise InputError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if 0.0 not in self.betas or len(set(self.betas)) < 2:
            raise InputError("beta grid must contain 0 and at least one other value")

    def train_hyper(self) -> TrainHyper:
        return TrainHyper(
            batch_size=self.batch_size, learning_rate=self.learning_rate, epochs=self.epochs,
            seed=self.seed, hidden=self.hidden, trace=self.trace,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["trace"] = self.trace.value
        out["betas"] = list(self.betas)
        out["trial_policy"] = self.trial_policy.to_dict()
        return out


@dataclass
class SystemResult:
    name: str
    final_nll: float | None = None
    failed: str | None = None
    eer: dict[float, EerResult] = field(default_factory=dict)
    metric_slopes: dict[str, dict] = field(default_factory=dict)

    @property
    def pitch_slope(self) -> float:
        return self.metric_slopes.get("pitch", {}).get("slope", float("nan"))


@dataclass
class ExperimentReport:
    spec: SyntheticCorpusSpec
    hyper: FlowExperimentHyper
    systems: dict[str, SystemResult]

    @property
    def failed(self) -> list[str]:
        return [name for name, s in self.systems.items() if s.failed]

    def to_frame(self) -> pd.DataFrame:
        """One row per (system, beta): system, beta, eer, pitch_slope."""
        rows = []
        for name in SYSTEMS:
            result = self.systems[name]
            for beta in self.hyper.betas:
                r = result.eer.get(beta)
                rows.append({
                    "system": name,
                    "beta": beta,
                    "eer": r.eer if r else float("nan"),
                    "pitch_slope": result.pitch_slope,
                })
        return pd.DataFrame(rows, columns=["system", "beta", "eer", "pitch_slope"])

    def ordering_holds(self) -> bool:
        """
        Headline ordering, with no tolerance: adapted strictly beats base at
        |beta| >= 0.75 and by at least 2x at the grid ends, combined stays
        within 2x of adapted at every beta, and the base pitch slope is at
        least 3x the adapted one.
        """
        if self.failed:
            return False
        base, adapted, combined = (self.systems[n] for n in SYSTEMS)
        edge = max(abs(b) for b in self.hyper.betas)
        for beta in self.hyper.betas:
            e_b, e_a, e_c = base.eer[beta].eer, adapted.eer[beta].eer, combined.eer[beta].eer
            if abs(beta) >= 0.75 and not e_a < e_b:
                return False
            if abs(beta) == edge and e_b < 2.0 * e_a:
                return False
            if max(e_a, e_c) > 2.0 * min(e_a, e_c):
                return False
        return bool(abs(base.pitch_slope) >= 3.0 * abs(adapted.pitch_slope))

    def summary(self) -> dict:
        return {
            "corpus": asdict(self.spec),
            "hyper": self.hyper.to_dict(),
            "final_nll": {n: s.final_nll for n, s in self.systems.items()},
            "metric_slopes": {n: s.metric_slopes for n, s in self.systems.items()},
            "failed": {n: s.failed for n, s in self.systems.items() if s.failed},
            "paper_pattern": self.ordering_holds(),
        }


def evaluate_system(
    model: FlowModel,
    test: SyntheticCorpus,
    betas: tuple[float, ...],
    policy: TrialPolicy = TrialPolicy(),
) -> tuple[dict[float, EerResult], dict[str, dict]]:
    """EER per beta, and read-back pitch/creak slopes against beta."""
    originals = {u: (s, e) for u, s, e in zip(test.utterance_ids, test.speaker_ids, test.embeddings)}
    shifted = {beta: manipulate(model, test.embeddings, test.attrs, shift_creak_array(test.attrs, beta)) for beta in betas}

    results = {}
    for beta in betas:
        manipulated = dict(zip(test.utterance_ids, shifted[beta]))
        results[beta] = eer(build_trials(originals, manipulated, policy))
        logger.debug("beta %+.2f: EER %.4f", beta, results[beta].eer)

    reference = {
        "pitch": implied_pitch(shifted[0.0], test.mixing, test.offset),
        "creak": implied_creak(shifted[0.0], test.mixing, test.offset),
    }
    records: dict[str, list[tuple[float, float]]] = {"pitch": [], "creak": []}
    for beta in betas:
        values = {
            "pitch": implied_pitch(shifted[beta], test.mixing, test.offset),
            "creak": implied_creak(shifted[beta], test.mixing, test.offset),
        }
        for metric, v in values.items():
            records[metric].extend((beta, float(x)) for x in v - reference[metric])
    slopes = {m: {"slope": s.slope, "r": s.r} for m, s in metric_slope_vs_beta(records).items()}
    return results, slopes


def run_experiment(
    spec: SyntheticCorpusSpec = SyntheticCorpusSpec(),
    hyper: FlowExperimentHyper = FlowExperimentHyper(),
) -> ExperimentReport:
    """Train the three systems and evaluate them on held-out speakers."""
    corpus = generate_corpus(spec)
    adapted = decorrelate_corpus(corpus, hyper.b)
    train_mask, test_mask = split_speakers(corpus, hyper.test_fraction, spec.seed)
    test = corpus.subset(test_mask)

    base_train = corpus.subset(train_mask)
    adapted_train = adapted.subset(train_mask)
    n_extra = int(round(hyper.combined_ratio * len(adapted_train)))
    extra = np.sort(np.random.default_rng([spec.seed, 3]).choice(len(adapted_train), n_extra, replace=False))
    datasets = {
        "base": (base_train.embeddings, base_train.attrs),
        "adapted": (adapted_train.embeddings, adapted_train.attrs),
        "combined": (
            np.concatenate([base_train.embeddings, adapted_train.embeddings[extra]]),
            np.concatenate([base_train.attrs, adapted_train.attrs[extra]]),
        ),
    }

    solver = SolverConfig(steps=hyper.steps)
    systems = {}
    for name in SYSTEMS:
        result = SystemResult(name)
        embeddings, attrs = datasets[name]
        logger.info("Training %s flow on %d embeddings", name, len(embeddings))
        try:
            model = train(embeddings, attrs, hyper.train_hyper(), solver)
            result.final_nll = model.final_nll
            result.eer, result.metric_slopes = evaluate_system(model, test, hyper.betas, hyper.trial_policy)
        except NumericalError as e:
            logger.warning("System %s failed: %s", name, e)
            result.failed = str(e)
        systems[name] = result
    return ExperimentReport(spec, hyper, systems)
