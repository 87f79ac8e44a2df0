"""
Conditional continuous normalizing flow over speaker embeddings.

Embeddings s live at t=1 and base-normal latents at t=0. Encoding integrates
dz/dt = g(z, t, a) from 1 to 0; decoding runs the other way, optionally under
shifted attributes. Log-densities come from the augmented state

    dz/dt = g(z, t, a),    dl/dt = tr(dg/dz)

integrated from 1 to 0, giving log p(s | a) = log N(z(0); 0, I) + l(0).

Model file: a magic line, one JSON header line, then the parameters as a
little-endian float32 blob in state_dict order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import torch
from torch import nn

from creakbench.errors import DimensionError, InputError, ModelFormatError
from creakbench.flow.dynamics import N_ATTRS, DynamicsNet
from creakbench.flow.solver import T_DATA, T_LATENT, SolverConfig, solve

MAGIC = b"CREAKFLOW"
FORMAT_VERSION = 1
ATTRIBUTE_NAMES = ("breathiness", "roughness", "resonance", "weight", "mean_pitch_norm", "creak_prob")
CREAK_INDEX = ATTRIBUTE_NAMES.index("creak_prob")
PITCH_INDEX = ATTRIBUTE_NAMES.index("mean_pitch_norm")


class TraceMethod(str, Enum):
    EXACT = "exact"
    HUTCHINSON = "hutchinson"


@dataclass(frozen=True)
class AttributeVector:
    """Conditioning attributes. creak_prob may leave [0, 1] once shifted."""

    breathiness: float = 0.0
    roughness: float = 0.0
    resonance: float = 0.0
    weight: float = 0.0
    mean_pitch_norm: float = 0.0
    creak_prob: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(getattr(self, f.name)) for f in fields(self)):
            raise InputError("Attribute values must be finite")

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in ATTRIBUTE_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> AttributeVector:
        if len(values) != N_ATTRS:
            raise DimensionError(f"Expected {N_ATTRS} attributes, got {len(values)}")
        return cls(*(float(v) for v in values))


Attributes = Union[AttributeVector, Sequence[AttributeVector], np.ndarray]


def shift_creak(a: AttributeVector, beta: float) -> AttributeVector:
    """Add beta to creak_prob only; no clamping."""
    return replace(a, creak_prob=a.creak_prob + beta)


def shift_creak_array(attrs: np.ndarray, beta: float) -> np.ndarray:
    out = np.array(attrs, dtype=np.float64, copy=True)
    out[..., CREAK_INDEX] += beta
    return out


# ==========================================================================
# TRACE ESTIMATORS
# ==========================================================================

def exact_trace(dz: torch.Tensor, z: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
    """Per-sample tr(d dz / d z), one directional derivative per dimension."""
    trace = torch.zeros(z.shape[0], dtype=z.dtype)
    for i in range(z.shape[1]):
        grad = torch.autograd.grad(dz[:, i].sum(), z, create_graph=create_graph, retain_graph=True)[0]
        trace = trace + grad[:, i]
    return trace


def rademacher(shape: tuple[int, ...], generator: torch.Generator, dtype=torch.float64) -> torch.Tensor:
    return torch.randint(0, 2, shape, generator=generator).to(dtype) * 2 - 1


def hutchinson_traces(dz: torch.Tensor, z: torch.Tensor, probes: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
    """e^T J e for each probe e; probes (P, B, d) -> estimates (P, B)."""
    estimates = []
    for e in probes:
        vjp = torch.autograd.grad(dz, z, e, create_graph=create_graph, retain_graph=True)[0]
        estimates.append(torch.einsum("bi,bi->b", vjp, e))
    return torch.stack(estimates)


class AugmentedDynamics(nn.Module):
    """State (z, l) with dl/dt = trace of the dynamics Jacobian."""

    def __init__(
        self,
        net: nn.Module,
        a: torch.Tensor,
        trace: TraceMethod = TraceMethod.EXACT,
        probes: torch.Tensor | None = None,
        create_graph: bool = False,
    ):
        super().__init__()
        self.net = net
        self.a = a
        self.trace = trace
        self.probes = probes
        self.create_graph = create_graph

    def forward(self, t: torch.Tensor, state: tuple[torch.Tensor, torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
        z = state[0]
        with torch.enable_grad():
            if not z.requires_grad:
                z = z.detach().requires_grad_(True)
            dz = self.net(t, z, self.a)
            if self.trace is TraceMethod.EXACT:
                tr = exact_trace(dz, z, self.create_graph)
            else:
                tr = hutchinson_traces(dz, z, self.probes, self.create_graph).mean(dim=0)
        if not self.create_graph:
            dz, tr = dz.detach(), tr.detach()
        return dz, tr


def standard_normal_logpdf(z: torch.Tensor) -> torch.Tensor:
    return -0.5 * (z * z).sum(dim=1) - 0.5 * z.shape[1] * math.log(2 * math.pi)


# ==========================================================================
# MODEL
# ==========================================================================

@dataclass
class FlowModel:
    net: DynamicsNet
    solver: SolverConfig = field(default_factory=SolverConfig)
    attr_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_ATTRS))
    attr_std: np.ndarray = field(default_factory=lambda: np.ones(N_ATTRS))
    trace: TraceMethod = TraceMethod.EXACT
    hutchinson_probes: int = 1
    seed: int = 0
    final_nll: float | None = None
    nll_history: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self) -> None:
        self.trace = TraceMethod(self.trace)
        self.attr_mean = np.asarray(self.attr_mean, dtype=np.float64)
        self.attr_std = np.asarray(self.attr_std, dtype=np.float64)
        if self.attr_mean.shape != (N_ATTRS,) or self.attr_std.shape != (N_ATTRS,):
            raise DimensionError(f"Attribute stats must have {N_ATTRS} entries")
        if np.any(self.attr_std <= 0):
            raise InputError("Attribute stds must be positive")
        if self.hutchinson_probes < 1:
            raise InputError("hutchinson_probes must be >= 1")

    @property
    def dim(self) -> int:
        return self.net.dim

    @classmethod
    def create(cls, dim: int, hidden: int = 64, seed: int = 0, zero_init: bool = False, **kwargs) -> FlowModel:
        return cls(DynamicsNet(dim, hidden, seed=seed, zero_init=zero_init), seed=seed, **kwargs)

    # --- tensor plumbing ---

    def embeddings(self, s: np.ndarray) -> torch.Tensor:
        arr = np.atleast_2d(np.asarray(s, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise DimensionError(f"Expected embeddings of dimension {self.dim}, got shape {np.shape(s)}")
        if not np.all(np.isfinite(arr)):
            raise InputError("Embeddings must be finite")
        return torch.from_numpy(arr.copy())

    def attributes(self, a: Attributes, n: int) -> torch.Tensor:
        """Normalized attribute batch of n rows; a single vector is broadcast."""
        if isinstance(a, AttributeVector):
            arr = a.to_array()[None, :]
        elif isinstance(a, (list, tuple)) and a and isinstance(a[0], AttributeVector):
            arr = np.stack([v.to_array() for v in a])
        else:
            arr = np.atleast_2d(np.asarray(a, dtype=np.float64))
        if arr.shape[1:] != (N_ATTRS,):
            raise DimensionError(f"Expected {N_ATTRS} attributes per row, got shape {arr.shape}")
        if len(arr) == 1 and n != 1:
            arr = np.repeat(arr, n, axis=0)
        if len(arr) != n:
            raise DimensionError(f"{len(arr)} attribute rows for {n} embeddings")
        return torch.from_numpy((arr - self.attr_mean) / self.attr_std)

    def _probe_generator(self, seed: int | None) -> torch.Generator:
        return torch.Generator().manual_seed(self.seed if seed is None else seed)

    def log_prob(
        self,
        s: torch.Tensor,
        a: torch.Tensor,
        create_graph: bool = False,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        """Per-sample log-density of embedding tensor s under normalized attributes a."""
        probes = None
        if self.trace is TraceMethod.HUTCHINSON:
            probes = rademacher((self.hutchinson_probes, *s.shape), generator or self._probe_generator(None))
        func = AugmentedDynamics(self.net, a, self.trace, probes, create_graph)
        z0, l0 = solve(func, (s, torch.zeros(s.shape[0], dtype=s.dtype)), T_DATA, T_LATENT, self.solver)
        return standard_normal_logpdf(z0) + l0

    # --- persistence ---

    def header(self) -> dict:
        return {
            "dim": self.dim,
            "n_attrs": N_ATTRS,
            "hidden": self.net.hidden,
            "solver": self.solver.to_dict(),
            "trace": self.trace.value,
            "hutchinson_probes": self.hutchinson_probes,
            "seed": self.seed,
            "attr_mean": [float(v) for v in self.attr_mean],
            "attr_std": [float(v) for v in self.attr_std],
            "final_nll": self.final_nll,
            "n_params": sum(p.numel() for p in self.net.parameters()),
        }

    def to_bytes(self) -> bytes:
        params = [p.detach().numpy().astype("<f4").ravel() for p in self.net.state_dict().values()]
        blob = np.concatenate(params).tobytes()
        head = json.dumps(self.header(), sort_keys=True).encode()
        return MAGIC + f" {FORMAT_VERSION}\n".encode() + head + b"\n" + blob

    @classmethod
    def from_bytes(cls, data: bytes) -> FlowModel:
        magic_line, sep, rest = data.partition(b"\n")
        if not sep or magic_line != MAGIC + f" {FORMAT_VERSION}".encode():
            raise ModelFormatError("Not a version-1 creak flow model")
        head_line, sep, blob = rest.partition(b"\n")
        try:
            head = json.loads(head_line)
            net = DynamicsNet(int(head["dim"]), int(head["hidden"]))
            if int(head["n_attrs"]) != N_ATTRS:
                raise ModelFormatError(f"Model expects {head['n_attrs']} attributes, not {N_ATTRS}")
            solver = SolverConfig.from_dict(head["solver"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"Corrupt model header: {e}") from e

        n_params = sum(p.numel() for p in net.parameters())
        if not sep or len(blob) != 4 * n_params or head.get("n_params") != n_params:
            raise ModelFormatError(f"Parameter blob has {len(blob)} bytes, expected {4 * n_params}")
        values = np.frombuffer(blob, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise ModelFormatError("Model parameters are not finite")

        state, offset = {}, 0
        for name, p in net.state_dict().items():
            state[name] = torch.from_numpy(values[offset:offset + p.numel()].reshape(p.shape).copy())
            offset += p.numel()
        net.load_state_dict(state)
        try:
            return cls(
                net=net,
                solver=solver,
                attr_mean=np.asarray(head["attr_mean"], dtype=np.float64),
                attr_std=np.asarray(head["attr_std"], dtype=np.float64),
                trace=TraceMethod(head["trace"]),
                hutchinson_probes=int(head["hutchinson_probes"]),
                seed=int(head["seed"]),
                final_nll=head["final_nll"],
            )
        except (KeyError, ValueError) as e:
            raise ModelFormatError(f"Corrupt model header: {e}") from e

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Path | str) -> FlowModel:
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise ModelFormatError(f"Cannot read model {path}: {e}") from e
        return cls.from_bytes(data)


# ==========================================================================
# OPERATIONS
# ==========================================================================

def log_likelihood(model: FlowModel, s: np.ndarray, a: Attributes, seed: int | None = None) -> np.ndarray:
    """log p(s | a) per embedding. Hutchinson probes are seeded (model seed by default)."""
    st = model.embeddings(s)
    at = model.attributes(a, len(st))
    with torch.no_grad():
        return model.log_prob(st, at, generator=model._probe_generator(seed)).numpy()


def encode(model: FlowModel, s: np.ndarray, a: Attributes) -> np.ndarray:
    st = model.embeddings(s)
    with torch.no_grad():
        return _transport(model, st, model.attributes(a, len(st)), T_DATA, T_LATENT).numpy()


def decode(model: FlowModel, z: np.ndarray, a: Attributes) -> np.ndarray:
    zt = model.embeddings(z)
    with torch.no_grad():
        return _transport(model, zt, model.attributes(a, len(zt)), T_LATENT, T_DATA).numpy()


def _transport(model: FlowModel, z: torch.Tensor, a: torch.Tensor, from_t: float, to_t: float) -> torch.Tensor:
    return solve(lambda t, y: model.net(t, y, a), z, from_t, to_t, model.solver)


def manipulate(model: FlowModel, s: np.ndarray, a: Attributes, a_tilde: Attributes) -> np.ndarray:
    """Encode under a, decode under a_tilde."""
    return decode(model, encode(model, s, a), a_tilde)


def sample(model: FlowModel, a: Attributes, n: int, seed: int = 0) -> np.ndarray:
    """n new embeddings decoded from standard-normal draws at attributes a."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    z = torch.randn((n, model.dim), generator=torch.Generator().manual_seed(seed), dtype=torch.float64)
    return decode(model, z.numpy(), a)
