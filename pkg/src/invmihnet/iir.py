"""Invertible rescaling of secret images into mosaic tiles."""
from __future__ import annotations

from typing import Optional, Sequence

import torch
import torch.nn as nn

from .coupling import InvBlock, SubnetConfig, run_blocks
from .latent import sample_latent
from .transforms import MosaicLayout, compose, decompose, splice_mosaic, unsplice_mosaic

__all__ = ["IIR"]


class IIR(nn.Module):
    """Downscales each secret by the grid factor (m, n) and upscales back.

    Forward: ``decompose`` then ``num_blocks`` coupling blocks; the low
    branch is the tile, the high branch the residual ``r_high``. All secrets
    share the same weights, so parameter count does not depend on N.
    """

    def __init__(
        self,
        layout: MosaicLayout,
        num_blocks: int = 8,
        channels: int = 3,
        subnet: SubnetConfig = SubnetConfig(),
    ):
        super().__init__()
        self.layout = MosaicLayout(layout.m, layout.n)
        self.channels = channels
        self.subnet = subnet
        high = (layout.count - 1) * channels
        # a 1x1 grid has no high band; the tile is the secret itself
        depth = num_blocks if high else 0
        self.blocks = nn.ModuleList(InvBlock.dense(channels, high, subnet) for _ in range(depth))

    @property
    def high_channels(self) -> int:
        return (self.layout.count - 1) * self.channels

    def downscale(self, x_s: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, C, H*m, W*n) -> (tile (B, C, H, W), r_high (B, (mn-1)C, H, W))."""
        if x_s.dim() != 4 or x_s.shape[1] != self.channels:
            raise ValueError(f"expected (B, {self.channels}, H, W) secrets, got {tuple(x_s.shape)}")
        low, high = decompose(x_s, self.layout)
        return run_blocks(self.blocks, low, high)

    def upscale(self, tile: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        expected = (tile.shape[0], self.high_channels, *tile.shape[-2:])
        if tile.dim() != 4 or tile.shape[1] != self.channels or tuple(z.shape) != expected:
            raise ValueError(
                f"tile {tuple(tile.shape)} / latent {tuple(z.shape)} do not fit the "
                f"{self.layout.m}x{self.layout.n} layout (latent should be {expected})"
            )
        low, high = run_blocks(self.blocks, tile, z, reverse=True)
        return compose(low, high, self.layout)

    def latent_shape(self, tile: torch.Tensor) -> tuple[int, int, int, int]:
        return (tile.shape[0], self.high_channels, tile.shape[-2], tile.shape[-1])

    def downscale_all(self, secrets: Sequence[torch.Tensor]) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Downscale N = m*n secrets in one batched pass and splice the tiles.

        Returns the mosaic and the per-secret residuals in input order.
        """
        count = self.layout.count
        if len(secrets) != count:
            raise ValueError(f"layout {self.layout.m}x{self.layout.n} takes {count} secrets, got {len(secrets)}")
        shape = secrets[0].shape
        if any(s.shape != shape for s in secrets):
            raise ValueError("all secret images must have the same shape")
        tiles, r_high = self.downscale(torch.cat(list(secrets), dim=0))
        bsz = shape[0]
        return splice_mosaic(list(tiles.split(bsz)), self.layout), list(r_high.split(bsz))

    def upscale_all(
        self,
        msi: torch.Tensor,
        seed: Optional[int] = None,
        latents: Optional[Sequence[torch.Tensor]] = None,
        mode: str = "normal",
        generator: Optional[torch.Generator] = None,
    ) -> list[torch.Tensor]:
        """Unsplice a mosaic and upscale every tile.

        ``latents`` (one per tile) replace sampling, e.g. the true residuals.
        """
        tiles = unsplice_mosaic(msi, self.layout)
        bsz = msi.shape[0]
        batch = torch.cat(tiles, dim=0)
        if latents is not None:
            if len(latents) != len(tiles):
                raise ValueError(f"need {len(tiles)} latents, got {len(latents)}")
            z = torch.cat(list(latents), dim=0)
        else:
            z = sample_latent(self.latent_shape(batch), seed, mode, generator, msi.dtype, msi.device)
        return list(self.upscale(batch, z).split(bsz))
