"""Maximum-likelihood training by backpropagation through the fixed-step solver."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from creakbench.errors import FlowTrainingError, InputError
from creakbench.flow.dynamics import N_ATTRS, round_to_float32
from creakbench.flow.model import FlowModel, TraceMethod
from creakbench.flow.solver import SolverConfig, SolverMethod
from creakbench.log import get_logger

logger = get_logger(__name__)

MIN_SAMPLES_PER_DIM = 10
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TrainHyper:
    batch_size: int = 200
    learning_rate: float = 1e-4
    epochs: int = 100
    seed: int = 0
    hidden: int = 64
    trace: TraceMethod = TraceMethod.EXACT
    hutchinson_probes: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "trace", TraceMethod(self.trace))
        if self.batch_size < 1 or self.epochs < 1 or self.hidden < 1:
            raise InputError("batch_size, epochs and hidden must be positive")
        if not self.learning_rate > 0:
            raise InputError(f"learning_rate must be positive, got {self.learning_rate}")


def attribute_stats(attrs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-attribute mean and std; constant attributes get std 1."""
    mean = attrs.mean(axis=0)
    std = attrs.std(axis=0)
    return mean, np.where(std < STD_FLOOR, 1.0, std)


def train(
    embeddings: np.ndarray,
    attrs: np.ndarray,
    hyper: TrainHyper = TrainHyper(),
    solver: SolverConfig = SolverConfig(),
) -> FlowModel:
    """
    Fit a conditional flow by Adam on the mean negative log-likelihood.

    Batches follow a seeded permutation per epoch and wrap around when the
    batch is larger than the data. Training starts from the identity flow with
    the attribute inputs switched off. Parameters end on the float32 grid and
    `final_nll` is measured on the full data afterwards.

    Args:
        embeddings: (N, d) training embeddings
        attrs: (N, 6) raw attributes (normalized here; stats kept in the model)

    Raises:
        InputError: fewer than 10*d samples, shape mismatch, or an adaptive solver
        FlowTrainingError: the NLL becomes non-finite
    """
    s = np.asarray(embeddings, dtype=np.float64)
    a = np.asarray(attrs, dtype=np.float64)
    if s.ndim != 2 or a.shape != (len(s), N_ATTRS):
        raise InputError(f"Expected (N, d) embeddings and (N, {N_ATTRS}) attributes, got {s.shape} and {a.shape}")
    n, dim = s.shape
    if n < MIN_SAMPLES_PER_DIM * dim:
        raise InputError(f"Need at least {MIN_SAMPLES_PER_DIM * dim} samples for d={dim}, got {n}")
    if solver.method is not SolverMethod.FIXED_RK4:
        raise InputError("Training needs the fixed-step solver")

    mean, std = attribute_stats(a)
    model = FlowModel.create(
        dim, hyper.hidden, seed=hyper.seed, zero_init=True, solver=solver, attr_mean=mean, attr_std=std,
        trace=hyper.trace, hutchinson_probes=hyper.hutchinson_probes,
    )
    data = model.embeddings(s)
    cond = model.attributes(a, n)
    optimizer = torch.optim.Adam(model.net.parameters(), lr=hyper.learning_rate)
    batch_gen = torch.Generator().manual_seed(hyper.seed)
    probe_gen = torch.Generator().manual_seed(hyper.seed + 1)
    n_batches = math.ceil(n / hyper.batch_size)

    for epoch in range(1, hyper.epochs + 1):
        perm = torch.randperm(n, generator=batch_gen)
        losses = []
        for b in range(n_batches):
            idx = perm[(b * hyper.batch_size + torch.arange(hyper.batch_size)) % n]
            loss = -model.log_prob(data[idx], cond[idx], create_graph=True, generator=probe_gen).mean()
            if not torch.isfinite(loss):
                raise FlowTrainingError(
                    f"Non-finite NLL at epoch {epoch}, batch {b + 1}/{n_batches} "
                    f"(lr={hyper.learning_rate}, last epoch NLL={model.nll_history[-1] if model.nll_history else 'n/a'})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        model.nll_history.append(float(np.mean(losses)))
        logger.debug("epoch %d/%d  NLL %.4f", epoch, hyper.epochs, model.nll_history[-1])

    round_to_float32(model.net)
    with torch.no_grad():
        final = -model.log_prob(data, cond, generator=model._probe_generator(None)).mean().item()
    if not math.isfinite(final):
        raise FlowTrainingError(f"Non-finite final NLL after {hyper.epochs} epochs")
    model.final_nll = final
    logger.info("Trained flow d=%d on %d samples: final NLL %.4f", dim, n, final)
    return model
