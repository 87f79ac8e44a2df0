"""Conditional dynamics g(z, t, a) of the continuous flow."""
from __future__ import annotations

import torch
from torch import nn

from creakbench.errors import InputError

N_ATTRS = 6


class DynamicsNet(nn.Module):
    """Fully connected tanh network over the concatenation [z, t, a].

    Parameters are float64 and start on the float32 grid, so the on-disk
    model (float32 blob) reproduces them exactly. With zero_init the output
    layer and the attribute inputs start at zero: the flow is the identity
    and ignores its conditioning until training moves it.
    """

    def __init__(self, dim: int, hidden: int = 64, n_attrs: int = N_ATTRS, seed: int = 0, zero_init: bool = False):
        super().__init__()
        if dim < 1 or hidden < 1:
            raise InputError(f"dim and hidden must be positive, got {dim} and {hidden}")
        self.dim = dim
        self.hidden = hidden
        self.n_attrs = n_attrs
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.net = nn.Sequential(
                nn.Linear(dim + 1 + n_attrs, hidden),
                nn.Tanh(),
                nn.Linear(hidden, hidden),
                nn.Tanh(),
                nn.Linear(hidden, dim),
            ).double()
        with torch.no_grad():
            if zero_init:
                self.net[-1].weight.zero_()
                self.net[-1].bias.zero_()
                self.net[0].weight[:, dim + 1:].zero_()
            round_to_float32(self)

    def forward(self, t: torch.Tensor, z: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        tt = torch.as_tensor(t, dtype=z.dtype).reshape(1, 1).expand(z.shape[0], 1)
        return self.net(torch.cat([z, tt, a], dim=1))


@torch.no_grad()
def round_to_float32(module: nn.Module) -> None:
    for p in module.parameters():
        p.copy_(p.float().double())
