"""ODE transport between the data end (t=1) and the latent end (t=0)."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import torch
from torchdiffeq import odeint

from creakbench.errors import FlowDivergenceError, InputError

T_DATA = 1.0
T_LATENT = 0.0
MIN_STEPS = 4


class SolverMethod(str, Enum):
    FIXED_RK4 = "fixed-rk4"
    ADAPTIVE_RK45 = "adaptive-rk45"


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-step RK4 (trainable) or adaptive Dormand-Prince (inference only)."""

    method: SolverMethod = SolverMethod.FIXED_RK4
    steps: int = 20
    rtol: float = 1e-5
    atol: float = 1e-7

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", SolverMethod(self.method))
        if self.steps < MIN_STEPS:
            raise InputError(f"steps must be >= {MIN_STEPS}, got {self.steps}")
        if not (self.rtol > 0 and self.atol > 0):
            raise InputError("Solver tolerances must be positive")

    def to_dict(self) -> dict:
        return {"method": self.method.value, "steps": self.steps, "rtol": self.rtol, "atol": self.atol}

    @classmethod
    def from_dict(cls, data: dict) -> SolverConfig:
        return cls(SolverMethod(data["method"]), int(data["steps"]), float(data["rtol"]), float(data["atol"]))


def solve(func: Callable, state, from_t: float, to_t: float, cfg: SolverConfig):
    """Integrate func(t, state) from from_t to to_t; state may be a tensor or tuple of tensors.

    Raises:
        FlowDivergenceError: the solver fails or the final state is non-finite
    """
    if from_t == to_t:
        return state
    ref = state[0] if isinstance(state, tuple) else state
    try:
        if cfg.method is SolverMethod.FIXED_RK4:
            grid = torch.linspace(from_t, to_t, cfg.steps + 1, dtype=ref.dtype)
            path = odeint(func, state, grid, method="rk4")
        else:
            grid = torch.tensor([from_t, to_t], dtype=ref.dtype)
            path = odeint(func, state, grid, method="dopri5", rtol=cfg.rtol, atol=cfg.atol)
    except AssertionError as e:
        # torchdiffeq signals step-size underflow with assertions
        raise FlowDivergenceError(f"ODE solver failed: {e}") from e

    final = tuple(p[-1] for p in path) if isinstance(state, tuple) else path[-1]
    for part in final if isinstance(final, tuple) else (final,):
        if not torch.all(torch.isfinite(part)):
            raise FlowDivergenceError(f"Non-finite state integrating t={from_t} -> {to_t}")
    return final


def integrate(
    net: Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor],
    z: torch.Tensor,
    a: torch.Tensor,
    from_t: float,
    to_t: float,
    cfg: SolverConfig = SolverConfig(),
) -> torch.Tensor:
    """Solve dz/dt = net(t, z, a) with attributes a held fixed."""
    return solve(lambda t, y: net(t, y, a), z, from_t, to_t, cfg)
