from dataclasses import replace

import numpy as np
import pytest
import torch
from scipy.integrate import trapezoid
from scipy.linalg import expm
from scipy.stats import norm
from torch import nn

from creakbench.errors import DimensionError, FlowDivergenceError, InputError, ModelFormatError
from creakbench.flow import (
    AttributeVector,
    FlowModel,
    SolverConfig,
    SolverMethod,
    TraceMethod,
    TrainHyper,
    decode,
    encode,
    integrate,
    log_likelihood,
    manipulate,
    sample,
    shift_creak,
    shift_creak_array,
    train,
)
from creakbench.flow.dynamics import DynamicsNet
from creakbench.flow.model import exact_trace, hutchinson_traces, rademacher


def batch(n: int, dim: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, dim)), rng.standard_normal((n, 6))


class LinearDynamics(nn.Module):
    """dz/dt = A z, independent of t and a."""

    def __init__(self, a: np.ndarray):
        super().__init__()
        self.dim = a.shape[0]
        self.hidden = 0
        self.register_buffer("a", torch.from_numpy(a))

    def forward(self, t, z, attrs):
        return z @ self.a.T


class TestAttributes:
    def test_shift_creak_touches_only_creak(self):
        a = AttributeVector(breathiness=0.1, mean_pitch_norm=0.3, creak_prob=0.2)
        shifted = shift_creak(a, 1.25)
        assert shifted.creak_prob == pytest.approx(1.45)
        assert shifted.to_array()[:5].tolist() == a.to_array()[:5].tolist()

    def test_shift_array(self):
        attrs = np.zeros((2, 6))
        assert shift_creak_array(attrs, -0.5)[:, 5].tolist() == [-0.5, -0.5]
        assert attrs[:, 5].tolist() == [0.0, 0.0]

    def test_from_array_length(self):
        with pytest.raises(DimensionError):
            AttributeVector.from_array([0.0] * 5)

    def test_non_finite(self):
        with pytest.raises(InputError):
            AttributeVector(creak_prob=float("nan"))


class TestDensity:
    def test_zero_dynamics_is_standard_normal(self):
        model = FlowModel.create(3, hidden=16, zero_init=True)
        s, a = batch(8, 3)
        expected = norm.logpdf(s).sum(axis=1)
        assert np.allclose(log_likelihood(model, s, a), expected, atol=1e-9)

    def test_zero_dynamics_hutchinson(self):
        model = FlowModel.create(3, hidden=16, zero_init=True, trace=TraceMethod.HUTCHINSON, hutchinson_probes=2)
        s, a = batch(8, 3)
        assert np.allclose(log_likelihood(model, s, a), norm.logpdf(s).sum(axis=1), atol=1e-9)

    def test_linear_dynamics_match_gaussian_pushforward(self):
        a_mat = np.array([[0.3, 0.1], [-0.2, -0.1]])
        model = FlowModel(net=LinearDynamics(a_mat))
        s, attrs = batch(6, 2)
        z0 = s @ expm(-a_mat).T
        expected = norm.logpdf(z0).sum(axis=1) - np.trace(a_mat)
        assert np.allclose(log_likelihood(model, s, attrs), expected, atol=1e-3)

    def test_hutchinson_is_unbiased_for_linear_dynamics(self):
        a_mat = np.array([[0.3, 0.1], [-0.2, -0.1]])
        exact = FlowModel(net=LinearDynamics(a_mat))
        hutch = FlowModel(net=LinearDynamics(a_mat), trace=TraceMethod.HUTCHINSON, hutchinson_probes=64)
        s, attrs = batch(4, 2)
        assert np.allclose(log_likelihood(hutch, s, attrs, seed=1), log_likelihood(exact, s, attrs), atol=0.1)

    def test_density_integrates_to_one(self):
        model = FlowModel.create(1, hidden=16, seed=3, solver=SolverConfig(steps=40))
        grid = np.linspace(-8.0, 8.0, 2048)
        attrs = np.zeros((len(grid), 6))
        attrs[:, 5] = 0.4
        density = np.exp(log_likelihood(model, grid[:, None], attrs))
        assert 0.99 <= trapezoid(density, grid) <= 1.01

    def test_hutchinson_matches_exact_trace_at_d8(self):
        net = DynamicsNet(8, hidden=32, seed=2)
        rng = np.random.default_rng(1)
        z = torch.from_numpy(rng.standard_normal((3, 8))).requires_grad_(True)
        attrs = torch.from_numpy(rng.standard_normal((3, 6)))
        dz = net(torch.tensor(0.3, dtype=torch.float64), z, attrs)
        exact = exact_trace(dz, z).detach().numpy()
        probes = rademacher((1000, 3, 8), torch.Generator().manual_seed(0))
        estimates = hutchinson_traces(dz, z, probes).detach().numpy()
        standard_error = estimates.std(axis=0, ddof=1) / np.sqrt(1000)
        assert np.all(np.abs(estimates.mean(axis=0) - exact) <= 3.0 * standard_error)

    def test_loglik_is_seeded(self):
        model = FlowModel.create(2, hidden=8, seed=2, trace=TraceMethod.HUTCHINSON)
        s, a = batch(5, 2)
        assert np.array_equal(log_likelihood(model, s, a, seed=4), log_likelihood(model, s, a, seed=4))

    def test_single_embedding(self):
        model = FlowModel.create(3, hidden=8)
        s, a = batch(1, 3)
        assert log_likelihood(model, s[0], AttributeVector.from_array(a[0])).shape == (1,)

    def test_wrong_dimension(self):
        model = FlowModel.create(3, hidden=8)
        s, a = batch(4, 2)
        with pytest.raises(DimensionError):
            log_likelihood(model, s, a)

    def test_wrong_attribute_rows(self):
        model = FlowModel.create(2, hidden=8)
        s, a = batch(4, 2)
        with pytest.raises(DimensionError):
            log_likelihood(model, s, a[:3])


class TestTransport:
    def test_round_trip(self):
        model = FlowModel.create(3, hidden=16, seed=1)
        s, a = batch(10, 3)
        back = decode(model, encode(model, s, a), a)
        assert np.max(np.abs(back - s)) <= 1e-4

    def test_round_trip_error_shrinks_with_steps(self):
        model = FlowModel.create(3, hidden=16, seed=1)
        with torch.no_grad():
            model.net.net[-1].weight.mul_(2.0)
        s, a = batch(10, 3)
        errors = []
        for steps in (10, 20, 40, 80):
            m = replace(model, solver=SolverConfig(steps=steps))
            errors.append(np.max(np.abs(decode(m, encode(m, s, a), a) - s)))
        assert errors[0] <= 1e-4
        for coarse, fine in zip(errors, errors[1:]):
            assert fine <= coarse / 2

    def test_zero_shift_manipulation_is_identity(self):
        model = FlowModel.create(3, hidden=16, seed=1)
        s, a = batch(10, 3)
        assert np.max(np.abs(manipulate(model, s, a, shift_creak_array(a, 0.0)) - s)) <= 1e-4

    def test_creak_shift_moves_embeddings(self):
        model = FlowModel.create(3, hidden=16, seed=1)
        s, a = batch(10, 3)
        assert np.max(np.abs(manipulate(model, s, a, shift_creak_array(a, 1.0)) - s)) > 1e-6

    def test_adaptive_solver_agrees_with_rk4(self):
        model = FlowModel.create(3, hidden=16, seed=1)
        adaptive = replace(model, solver=SolverConfig(SolverMethod.ADAPTIVE_RK45))
        s, a = batch(5, 3)
        assert np.allclose(encode(adaptive, s, a), encode(model, s, a), atol=1e-4)

    def test_integrate_same_endpoints(self):
        model = FlowModel.create(2, hidden=8)
        z = torch.ones(3, 2, dtype=torch.float64)
        assert torch.equal(integrate(model.net, z, torch.zeros(3, 6, dtype=torch.float64), 0.5, 0.5), z)

    def test_divergence_is_reported(self):
        model = FlowModel(net=LinearDynamics(np.eye(2) * 1e6))
        s, a = batch(2, 2)
        with pytest.raises(FlowDivergenceError):
            encode(model, s, a)

    def test_sample(self):
        model = FlowModel.create(3, hidden=8)
        a = AttributeVector(creak_prob=0.5)
        first = sample(model, a, 4, seed=3)
        assert first.shape == (4, 3)
        assert np.array_equal(first, sample(model, a, 4, seed=3))
        with pytest.raises(InputError):
            sample(model, a, 0)


def test_gradients_match_finite_differences():
    model = FlowModel.create(2, hidden=8, seed=5, solver=SolverConfig(steps=8))
    s_np, a_np = batch(6, 2, seed=3)
    s, a = model.embeddings(s_np), model.attributes(a_np, 6)

    loss = -model.log_prob(s, a, create_graph=True).mean()
    params = list(model.net.parameters())
    grads = torch.autograd.grad(loss, params)

    rng = np.random.default_rng(0)
    eps = 1e-6
    for _ in range(50):
        p = int(rng.integers(len(params)))
        i = int(rng.integers(params[p].numel()))
        flat = params[p].data.view(-1)
        original = flat[i].item()
        with torch.no_grad():
            flat[i] = original + eps
            up = -model.log_prob(s, a).mean().item()
            flat[i] = original - eps
            down = -model.log_prob(s, a).mean().item()
            flat[i] = original
        fd = (up - down) / (2 * eps)
        assert grads[p].view(-1)[i].item() == pytest.approx(fd, rel=1e-3, abs=1e-6)


class TestPersistence:
    def test_bytes_are_stable(self, tmp_path):
        model = FlowModel.create(3, hidden=8, seed=4, final_nll=1.25)
        model.save(tmp_path / "m.flow")
        loaded = FlowModel.load(tmp_path / "m.flow")
        assert loaded.to_bytes() == (tmp_path / "m.flow").read_bytes()
        assert loaded.final_nll == 1.25

    def test_loaded_model_computes_the_same(self, tmp_path):
        model = FlowModel.create(3, hidden=8, seed=4)
        model.save(tmp_path / "m.flow")
        s, a = batch(4, 3)
        assert np.array_equal(log_likelihood(FlowModel.load(tmp_path / "m.flow"), s, a), log_likelihood(model, s, a))

    def test_file_layout(self):
        data = FlowModel.create(2, hidden=4).to_bytes()
        magic, header, _ = data.split(b"\n", 2)
        assert magic == b"CREAKFLOW 1"
        assert header.startswith(b"{")

    def test_bad_magic(self):
        with pytest.raises(ModelFormatError):
            FlowModel.from_bytes(b"NOTAFLOW 1\n{}\n")

    def test_truncated_blob(self):
        data = FlowModel.create(2, hidden=4).to_bytes()
        with pytest.raises(ModelFormatError):
            FlowModel.from_bytes(data[:-4])

    def test_corrupt_header(self):
        with pytest.raises(ModelFormatError):
            FlowModel.from_bytes(b"CREAKFLOW 1\n{not json\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFormatError):
            FlowModel.load(tmp_path / "none.flow")


class TestTraining:
    def test_zero_init_ignores_attributes(self):
        net = DynamicsNet(3, hidden=8, seed=1, zero_init=True)
        assert torch.count_nonzero(net.net[0].weight[:, 4:]) == 0
        assert torch.count_nonzero(net.net[0].weight[:, :4]) > 0

    def test_training_moves_off_the_identity(self):
        s, a = batch(40, 2)
        model = train(s, a, TrainHyper(epochs=1, batch_size=20, hidden=8, learning_rate=1e-2), SolverConfig(steps=4))
        assert torch.count_nonzero(model.net.net[-1].weight) > 0
        assert torch.count_nonzero(model.net.net[0].weight[:, 3:]) > 0

    def test_final_nll_matches_loglik(self):
        s, a = batch(60, 2)
        model = train(s, a, TrainHyper(epochs=2, batch_size=32, hidden=8, learning_rate=1e-2), SolverConfig(steps=4))
        assert len(model.nll_history) == 2
        assert np.isfinite(model.final_nll)
        assert -log_likelihood(model, s, a).mean() == pytest.approx(model.final_nll, abs=1e-6)

    def test_deterministic(self):
        s, a = batch(40, 2)
        hyper = TrainHyper(epochs=1, batch_size=16, hidden=8, seed=3)
        first = train(s, a, hyper, SolverConfig(steps=4))
        second = train(s, a, hyper, SolverConfig(steps=4))
        assert first.to_bytes() == second.to_bytes()

    def test_hutchinson_training(self):
        s, a = batch(40, 2)
        model = train(s, a, TrainHyper(epochs=1, batch_size=64, hidden=8, trace="hutchinson"), SolverConfig(steps=4))
        assert model.trace is TraceMethod.HUTCHINSON
        assert np.isfinite(model.final_nll)

    def test_training_reduces_nll(self):
        rng = np.random.default_rng(0)
        s = 3.0 + 0.5 * rng.standard_normal((200, 2))
        a = np.zeros((200, 6))
        model = train(s, a, TrainHyper(epochs=15, batch_size=50, hidden=16, learning_rate=1e-2), SolverConfig(steps=4))
        assert model.nll_history[-1] < model.nll_history[0]

    def test_needs_ten_samples_per_dimension(self):
        s, a = batch(19, 2)
        with pytest.raises(InputError):
            train(s, a)

    def test_adaptive_solver_rejected(self):
        s, a = batch(40, 2)
        with pytest.raises(InputError):
            train(s, a, solver=SolverConfig(SolverMethod.ADAPTIVE_RK45))

    def test_invalid_hyper(self):
        with pytest.raises(InputError):
            TrainHyper(learning_rate=0.0)
        with pytest.raises(InputError):
            SolverConfig(steps=2)


@pytest.mark.slow
def test_conditional_gaussian_is_learned():
    rng = np.random.default_rng(0)
    n = 2000
    a = np.zeros((n, 6))
    a[:, 5] = rng.choice([0.0, 1.0], n)
    s = (2.0 * a[:, 5] + 0.5 * rng.standard_normal(n))[:, None]
    model = train(s, a, TrainHyper(epochs=60, batch_size=200, hidden=32, learning_rate=1e-2), SolverConfig(steps=10))
    for target in (0.0, 1.0):
        drawn = sample(model, AttributeVector(creak_prob=target), 1000, seed=1)
        assert drawn.mean() == pytest.approx(2.0 * target, abs=0.2)

    low = a[:, 5] == 0.0
    moved = manipulate(model, s[low], a[low], shift_creak_array(a[low], 1.0))
    assert (moved - s[low]).mean() == pytest.approx(2.0, abs=0.2)
