"""Affine coupling block and its densely connected subnetworks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import torch
import torch.nn as nn

__all__ = [
    "SubnetConfig",
    "DenseSubnet",
    "InvBlock",
    "clamp_scale",
    "run_blocks",
    "NonFiniteError",
]


class NonFiniteError(FloatingPointError):
    """Raised when a coupling block produces NaN or Inf."""

    def __init__(self, block_index: int, direction: str):
        super().__init__(f"non-finite values after {direction} pass of block {block_index}")
        self.block_index = block_index
        self.direction = direction


@dataclass(frozen=True)
class SubnetConfig:
    n_layers: int = 5
    growth_channels: int = 32
    kernel_size: int = 3
    clamp_constant: float = 2.0
    negative_slope: float = 0.2

    def __post_init__(self):
        if self.n_layers < 1 or self.growth_channels < 1:
            raise ValueError("n_layers and growth_channels must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.clamp_constant <= 0:
            raise ValueError("clamp_constant must be positive")


def clamp_scale(u: torch.Tensor, clamp_constant: float) -> torch.Tensor:
    """Soft clamp ``c * (2 * sigmoid(u) - 1)``, range (-c, c)."""
    return clamp_constant * (2 * torch.sigmoid(u) - 1)


class DenseSubnet(nn.Module):
    """Densely connected conv stack; each layer sees the input plus every
    previous hidden output. The last conv is linear and starts at zero.
    """

    def __init__(self, in_channels: int, out_channels: int, config: SubnetConfig = SubnetConfig()):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        k, g = config.kernel_size, config.growth_channels
        pad = k // 2
        self.hidden = nn.ModuleList(
            nn.Conv2d(in_channels + i * g, g, k, padding=pad) for i in range(config.n_layers - 1)
        )
        self.out = nn.Conv2d(in_channels + (config.n_layers - 1) * g, out_channels, k, padding=pad)
        self.act = nn.LeakyReLU(config.negative_slope)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"subnetwork expects (B, {self.in_channels}, H, W), got {tuple(x.shape)}"
            )
        feats = [x]
        for conv in self.hidden:
            feats.append(self.act(conv(torch.cat(feats, dim=1))))
        return self.out(torch.cat(feats, dim=1))


class InvBlock(nn.Module):
    """Coupling block over a low branch (additive update) and a high branch
    (affine update)::

        l' = l + phi(h)
        h' = h * exp(s(rho(l'))) + psi(l')

    with ``s`` the soft clamp. ``reverse`` undoes ``forward`` exactly.
    """

    def __init__(self, phi: nn.Module, rho: nn.Module, psi: nn.Module, clamp_constant: float = 2.0):
        super().__init__()
        self.phi = phi
        self.rho = rho
        self.psi = psi
        self.clamp_constant = clamp_constant

    @classmethod
    def dense(cls, low_channels: int, high_channels: int, config: SubnetConfig = SubnetConfig()) -> "InvBlock":
        return cls(
            DenseSubnet(high_channels, low_channels, config),
            DenseSubnet(low_channels, high_channels, config),
            DenseSubnet(low_channels, high_channels, config),
            config.clamp_constant,
        )

    def _check(self, x_l: torch.Tensor, x_h: torch.Tensor) -> None:
        if x_l.shape[0] != x_h.shape[0] or x_l.shape[-2:] != x_h.shape[-2:]:
            raise ValueError(
                f"branch shapes disagree: low {tuple(x_l.shape)} vs high {tuple(x_h.shape)}"
            )

    def forward(self, x_l: torch.Tensor, x_h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        self._check(x_l, x_h)
        y_l = x_l + self.phi(x_h)
        s = clamp_scale(self.rho(y_l), self.clamp_constant)
        y_h = x_h * torch.exp(s) + self.psi(y_l)
        return y_l, y_h

    def reverse(self, y_l: torch.Tensor, y_h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        self._check(y_l, y_h)
        s = clamp_scale(self.rho(y_l), self.clamp_constant)
        x_h = (y_h - self.psi(y_l)) * torch.exp(-s)
        x_l = y_l - self.phi(x_h)
        return x_l, x_h


def run_blocks(
    blocks: Sequence[InvBlock],
    x_l: torch.Tensor,
    x_h: torch.Tensor,
    reverse: bool = False,
    check_finite: bool = True,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Apply a stack forward (in order) or in reverse (last block first)."""
    order: Iterable[int] = range(len(blocks))
    if reverse:
        order = reversed(range(len(blocks)))
    for i in order:
        block = blocks[i]
        x_l, x_h = block.reverse(x_l, x_h) if reverse else block(x_l, x_h)
        if check_finite and not (torch.isfinite(x_l).all() and torch.isfinite(x_h).all()):
            raise NonFiniteError(i, "reverse" if reverse else "forward")
    return x_l, x_h
