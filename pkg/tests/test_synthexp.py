import numpy as np
import pytest
from scipy.special import ndtr

from creakbench.errors import InputError
from creakbench.stats import pearson_r
from creakbench.synthexp import (
    BETA_GRID,
    SYSTEMS,
    ExperimentReport,
    FlowExperimentHyper,
    SyntheticCorpusSpec,
    SystemResult,
    copula_scale,
    decorrelate_corpus,
    generate_corpus,
    implied_creak,
    implied_pitch,
    run_experiment,
    split_speakers,
)
from creakbench.verify import EerResult


def test_beta_grid():
    assert BETA_GRID == (-1.25, -1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25)


class TestCorpus:
    def test_shapes_and_ids(self):
        corpus = generate_corpus(SyntheticCorpusSpec())
        assert corpus.embeddings.shape == (1000, 8)
        assert corpus.attrs.shape == (1000, 6)
        assert corpus.utterance_ids[0] == "spk000_0"
        assert len(set(corpus.utterance_ids)) == 1000
        assert np.all(corpus.attrs[:, :4] == 0.0)

    def test_deterministic(self):
        spec = SyntheticCorpusSpec(n_speakers=10, seed=4)
        assert np.array_equal(generate_corpus(spec).embeddings, generate_corpus(spec).embeddings)

    def test_mixing_is_orthogonal_without_weighting(self):
        w = generate_corpus(SyntheticCorpusSpec(n_speakers=5, creak_weight=1.0)).mixing
        assert np.allclose(w @ w.T, np.eye(8))

    def test_mixing_columns_carry_factor_weights(self):
        spec = SyntheticCorpusSpec(n_speakers=5)
        w = generate_corpus(spec).mixing
        assert np.allclose(np.linalg.norm(w, axis=0), spec.factor_weights)
        assert np.linalg.norm(w[:, 1]) == pytest.approx(0.35)
        assert np.linalg.cond(w) < 1e3

    @pytest.mark.parametrize("noise", [0.0, 0.3, 0.6])
    def test_pitch_creak_correlation_matches_rho(self, noise):
        spec = SyntheticCorpusSpec(n_speakers=2000, utterances_per_speaker=1, sigma=0.0, creak_obs_noise=noise)
        corpus = generate_corpus(spec)
        assert pearson_r(corpus.pitch_latent, corpus.creak_prob) == pytest.approx(-0.7, abs=0.06)

    def test_creak_attribute_is_a_noisy_measurement(self):
        corpus = generate_corpus(SyntheticCorpusSpec(n_speakers=50))
        assert not np.allclose(corpus.creak_prob, ndtr(corpus.latents[:, 1]))
        exact = generate_corpus(SyntheticCorpusSpec(n_speakers=50, creak_obs_noise=0.0))
        assert np.allclose(exact.creak_prob, ndtr(exact.latents[:, 1]))

    def test_decorrelation_breaks_the_link(self):
        corpus = generate_corpus(SyntheticCorpusSpec(n_speakers=400))
        adapted = decorrelate_corpus(corpus, b=2.0)
        assert abs(pearson_r(adapted.pitch_latent, adapted.creak_prob)) < 0.1
        assert np.array_equal(adapted.creak_prob, corpus.creak_prob)

    def test_zero_b_centres_pitch(self):
        adapted = decorrelate_corpus(generate_corpus(SyntheticCorpusSpec(n_speakers=10)), b=0.0)
        assert np.all(adapted.pitch_latent == 0.0)

    def test_negative_b(self):
        with pytest.raises(InputError):
            decorrelate_corpus(generate_corpus(SyntheticCorpusSpec(n_speakers=10)), b=-1.0)

    @pytest.mark.parametrize("kwargs", [
        {"rho": 1.0},
        {"rho": -0.98},
        {"d": 2},
        {"n_speakers": 1},
        {"sigma": -0.1},
        {"creak_obs_noise": -0.1},
        {"creak_weight": 0.0},
    ])
    def test_spec_validation(self, kwargs):
        with pytest.raises(InputError):
            SyntheticCorpusSpec(**kwargs)


class TestReadBack:
    def test_recovers_latents(self):
        corpus = generate_corpus(SyntheticCorpusSpec(n_speakers=20))
        pitch = implied_pitch(corpus.embeddings, corpus.mixing, corpus.offset)
        creak = implied_creak(corpus.embeddings, corpus.mixing, corpus.offset)
        assert np.allclose(pitch, corpus.pitch_latent, atol=1e-10)
        assert np.allclose(creak, ndtr(corpus.latents[:, 1]), atol=1e-10)

    def test_single_embedding_is_scalar(self):
        corpus = generate_corpus(SyntheticCorpusSpec(n_speakers=5))
        value = implied_pitch(corpus.embeddings[0], corpus.mixing)
        assert isinstance(value, float)
        assert value == pytest.approx(corpus.pitch_latent[0])

    def test_singular_mixing(self):
        with pytest.raises(InputError):
            implied_pitch(np.ones(3), np.diag([1.0, 1.0, 0.0]))

    def test_non_square_mixing(self):
        with pytest.raises(InputError):
            implied_creak(np.ones(3), np.ones((3, 2)))


def test_split_is_speaker_disjoint():
    corpus = generate_corpus(SyntheticCorpusSpec(n_speakers=50))
    train_mask, test_mask = split_speakers(corpus, 0.2, seed=1)
    train_spk = set(corpus.speaker_ids[train_mask])
    test_spk = set(corpus.speaker_ids[test_mask])
    assert not train_spk & test_spk
    assert len(test_spk) == 10 and len(train_spk) == 40
    assert np.all(train_mask ^ test_mask)


class TestHyper:
    @pytest.mark.parametrize("kwargs", [
        {"combined_ratio": 0.0},
        {"test_fraction": 1.0},
        {"betas": (-0.5, 0.5)},
        {"betas": (0.0,)},
        {"epochs": 0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(InputError):
            FlowExperimentHyper(**kwargs).train_hyper()

    def test_to_dict(self):
        out = FlowExperimentHyper(trace="hutchinson").to_dict()
        assert out["trace"] == "hutchinson"
        assert out["betas"] == list(BETA_GRID)
        assert out["trial_policy"]["mode"] == "exhaustive"


TINY_SPEC = SyntheticCorpusSpec(n_speakers=20, utterances_per_speaker=5, d=3, seed=1)
TINY_HYPER = FlowExperimentHyper(epochs=1, steps=4, hidden=8, betas=(-0.5, 0.0, 0.5), seed=1)


def test_tiny_experiment_report():
    report = run_experiment(TINY_SPEC, TINY_HYPER)
    assert not report.failed
    frame = report.to_frame()
    assert len(frame) == 9
    assert frame["system"].tolist() == ["base"] * 3 + ["adapted"] * 3 + ["combined"] * 3
    assert frame["eer"].between(0.0, 1.0).all()
    summary = report.summary()
    assert set(summary) == {"corpus", "hyper", "final_nll", "metric_slopes", "failed", "paper_pattern"}
    assert set(summary["metric_slopes"]["base"]) == {"pitch", "creak"}
    assert all(np.isfinite(v) for v in summary["final_nll"].values())


def test_copula_scale_without_noise():
    assert copula_scale(0.0) == pytest.approx(np.sqrt(3.0 / np.pi))
    assert copula_scale(0.3) < copula_scale(0.0)


def report_with(base: list[float], adapted: list[float], combined: list[float], slopes=(-0.5, -0.05)) -> ExperimentReport:
    betas = (-1.25, -0.75, 0.0, 0.75, 1.25)
    hyper = FlowExperimentHyper(betas=betas)
    systems = {}
    for name, values, slope in zip(SYSTEMS, (base, adapted, combined), (slopes[0], slopes[1], slopes[1])):
        systems[name] = SystemResult(
            name,
            final_nll=1.0,
            eer={b: EerResult(e, 0.0, 10, 10) for b, e in zip(betas, values)},
            metric_slopes={"pitch": {"slope": slope, "r": -0.9}},
        )
    return ExperimentReport(SyntheticCorpusSpec(n_speakers=5), hyper, systems)


class TestOrdering:
    def test_holds(self):
        report = report_with([0.2, 0.1, 0.01, 0.1, 0.2], [0.05, 0.05, 0.01, 0.05, 0.05], [0.06, 0.05, 0.01, 0.05, 0.06])
        assert report.ordering_holds()
        assert report.summary()["paper_pattern"] is True

    def test_tie_at_large_beta_fails(self):
        report = report_with([0.2, 0.05, 0.01, 0.1, 0.2], [0.05, 0.05, 0.01, 0.05, 0.05], [0.05] * 5)
        assert not report.ordering_holds()

    def test_edge_ratio_below_two_fails(self):
        report = report_with([0.09, 0.1, 0.01, 0.1, 0.2], [0.05, 0.05, 0.01, 0.05, 0.05], [0.05, 0.05, 0.01, 0.05, 0.05])
        assert not report.ordering_holds()

    def test_combined_has_no_tolerance_near_zero(self):
        report = report_with([0.2, 0.1, 0.01, 0.1, 0.2], [0.05, 0.05, 0.0, 0.05, 0.05], [0.05, 0.05, 0.005, 0.05, 0.05])
        assert not report.ordering_holds()

    def test_flat_base_pitch_slope_fails(self):
        report = report_with(
            [0.2, 0.1, 0.01, 0.1, 0.2], [0.05, 0.05, 0.01, 0.05, 0.05], [0.05, 0.05, 0.01, 0.05, 0.05],
            slopes=(-0.1, -0.05),
        )
        assert not report.ordering_holds()

    def test_failed_system(self):
        report = report_with([0.2] * 5, [0.05] * 5, [0.05] * 5)
        report.systems["combined"].failed = "diverged"
        assert not report.ordering_holds()
        assert report.summary()["failed"] == {"combined": "diverged"}


@pytest.mark.slow
def test_default_run_orders_the_systems():
    report = run_experiment()
    assert report.ordering_holds()
    assert report.systems["base"].pitch_slope < 0
