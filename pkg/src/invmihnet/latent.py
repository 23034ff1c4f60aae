from __future__ import annotations

from typing import Optional, Sequence

import torch

__all__ = ["sample_latent"]


def sample_latent(
    shape: Sequence[int],
    seed: Optional[int] = None,
    mode: str = "normal",
    generator: Optional[torch.Generator] = None,
    dtype: torch.dtype = torch.float32,
    device: Optional[torch.device] = None,
) -> torch.Tensor:
    """Draw the latent that stands in for a discarded residual at reveal time.

    ``mode`` is ``"normal"`` (i.i.d. standard normal) or ``"zeros"``. Pass
    either a ``seed`` or an explicit ``generator``; there is no fallback to
    the global RNG.
    """
    if mode == "zeros":
        return torch.zeros(tuple(shape), dtype=dtype, device=device)
    if mode != "normal":
        raise ValueError(f"unknown latent mode {mode!r}")
    if generator is None:
        if seed is None:
            raise ValueError("sampling a normal latent needs a seed or a generator")
        generator = torch.Generator(device="cpu").manual_seed(int(seed))
    z = torch.randn(tuple(shape), generator=generator, dtype=dtype)
    return z if device is None else z.to(device)
