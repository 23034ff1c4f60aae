"""End-to-end conceal/reveal pipeline over the two invertible modules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
import torch.nn as nn

from .coupling import SubnetConfig
from .iih import IIH, ConcealOutput
from .iir import IIR
from .transforms import MosaicLayout

__all__ = ["ModelConfig", "InvMIHNet", "HideResult"]


@dataclass(frozen=True)
class ModelConfig:
    m: int = 2
    n: int = 2
    iir_blocks: int = 8
    iih_blocks: int = 16
    channels: int = 3
    subnet: SubnetConfig = field(default_factory=SubnetConfig)

    @property
    def layout(self) -> MosaicLayout:
        return MosaicLayout(self.m, self.n)


@dataclass
class HideResult:
    stego: torch.Tensor
    stego_pre_quant: torch.Tensor
    msi: torch.Tensor
    r_high: list[torch.Tensor]
    r_hide: torch.Tensor

    @classmethod
    def from_parts(cls, msi, r_high, out: ConcealOutput) -> "HideResult":
        return cls(out.stego, out.stego_pre_quant, msi, r_high, out.r_hide)


class InvMIHNet(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig(), seed: Optional[int] = None):
        """``seed`` fixes the random init of the hidden layers without
        touching the global torch RNG; ``None`` draws from it as usual."""
        super().__init__()
        self.config = config
        with torch.random.fork_rng(enabled=seed is not None):
            if seed is not None:
                torch.manual_seed(int(seed))
            self.iir = IIR(config.layout, config.iir_blocks, config.channels, config.subnet)
            self.iih = IIH(config.iih_blocks, config.channels, config.subnet)

    @property
    def layout(self) -> MosaicLayout:
        return self.config.layout

    def hide(self, cover: torch.Tensor, secrets: Sequence[torch.Tensor]) -> HideResult:
        msi, r_high = self.iir.downscale_all(secrets)
        return HideResult.from_parts(msi, r_high, self.iih.conceal(cover, msi))

    def recover(
        self,
        stego: torch.Tensor,
        seed: Optional[int] = None,
        mode: str = "normal",
        generator: Optional[torch.Generator] = None,
    ) -> tuple[list[torch.Tensor], torch.Tensor]:
        """Reveal the mosaic and upscale it; returns ``(secrets, msi_hat)``.

        With a ``seed`` the hiding and rescaling latents come from one
        generator, in that order.
        """
        if generator is None and mode == "normal":
            if seed is None:
                raise ValueError("recover needs a seed or a generator")
            generator = torch.Generator().manual_seed(int(seed))
        msi_hat, _ = self.iih.reveal(stego, mode=mode, generator=generator)
        return self.iir.upscale_all(msi_hat, mode=mode, generator=generator), msi_hat
