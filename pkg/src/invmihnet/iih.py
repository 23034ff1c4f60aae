"""Invertible hiding of the mosaic inside the cover, in the Haar domain."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from .coupling import InvBlock, SubnetConfig, run_blocks
from .latent import sample_latent
from .transforms import haar_dwt, haar_idwt, quantize

__all__ = ["IIH", "ConcealOutput"]


@dataclass
class ConcealOutput:
    stego: torch.Tensor
    stego_pre_quant: torch.Tensor
    r_hide: torch.Tensor


class IIH(nn.Module):
    """Cover rides the additive branch, the mosaic the affine branch, both
    after one Haar level. ``r_hide`` is what is left in the mosaic branch; it
    is never transmitted, and ``reveal`` takes a sampled stand-in for it.
    """

    def __init__(self, num_blocks: int = 16, channels: int = 3, subnet: SubnetConfig = SubnetConfig()):
        super().__init__()
        self.channels = channels
        self.subnet = subnet
        width = 4 * channels
        self.blocks = nn.ModuleList(InvBlock.dense(width, width, subnet) for _ in range(num_blocks))

    def conceal(self, x_c: torch.Tensor, x_ds: torch.Tensor, quantize_levels: int = 256) -> ConcealOutput:
        if x_c.shape != x_ds.shape:
            raise ValueError(f"cover {tuple(x_c.shape)} and mosaic {tuple(x_ds.shape)} must match")
        if x_c.dim() != 4 or x_c.shape[1] != self.channels:
            raise ValueError(f"expected (B, {self.channels}, H, W) images, got {tuple(x_c.shape)}")
        cover_l = haar_dwt(x_c)
        out_l, out_h = run_blocks(self.blocks, cover_l, haar_dwt(x_ds))
        # inverse DWT of the change only, so an identity network returns x_c bit-exactly
        pre = x_c + haar_idwt(out_l - cover_l)
        return ConcealOutput(quantize(pre, quantize_levels), pre, out_h)

    def latent_shape(self, x_stego: torch.Tensor) -> tuple[int, int, int, int]:
        b, c, h, w = x_stego.shape
        return (b, 4 * c, h // 2, w // 2)

    def reveal(
        self,
        x_stego: torch.Tensor,
        z: Optional[torch.Tensor] = None,
        seed: Optional[int] = None,
        mode: str = "normal",
        generator: Optional[torch.Generator] = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Return ``(x_ds_hat, x_c_hat)``; ``z`` is sampled when not given."""
        stego_l = haar_dwt(x_stego)
        if z is None:
            z = sample_latent(stego_l.shape, seed, mode, generator, x_stego.dtype, x_stego.device)
        elif z.shape != stego_l.shape:
            raise ValueError(f"latent {tuple(z.shape)} must have shape {tuple(stego_l.shape)}")
        l, h = run_blocks(self.blocks, stego_l, z, reverse=True)
        return haar_idwt(h), x_stego + haar_idwt(l - stego_l)
