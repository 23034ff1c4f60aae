"""Fixed invertible transforms: Haar DWT, m x n polyphase decomposition,
mosaic splicing and 8-bit quantization.

Channel layout of every wavelet-like output is subband-major: for an input
with C channels the output holds ``[band_0 (C), band_1 (C), ...]`` so the
first C channels are always the low-frequency (averaging) band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import torch

__all__ = [
    "MosaicLayout",
    "layout_for_count",
    "haar_dwt",
    "haar_idwt",
    "mixing_matrix",
    "decompose",
    "compose",
    "splice_mosaic",
    "unsplice_mosaic",
    "quantize",
    "round_half_away",
]

_HAAR_2X2 = 0.5 * np.array(
    [[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], dtype=np.float64
)


@dataclass(frozen=True)
class MosaicLayout:
    """Grid of ``m`` rows by ``n`` columns of secret tiles, row-major order.

    ``tile_h``/``tile_w`` are optional; when set, splicing checks them.
    """

    m: int
    n: int
    tile_h: Optional[int] = None
    tile_w: Optional[int] = None

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.m}x{self.n}")

    @property
    def count(self) -> int:
        return self.m * self.n

    def cell(self, k: int) -> tuple[int, int]:
        return divmod(k, self.n)

    def with_tile(self, tile_h: int, tile_w: int) -> "MosaicLayout":
        return MosaicLayout(self.m, self.n, tile_h, tile_w)


def layout_for_count(count: int) -> MosaicLayout:
    """Most square grid for ``count`` secrets with rows <= cols (6 -> 2x3)."""
    if count < 1:
        raise ValueError("need at least one secret image")
    m = max(d for d in range(1, math.isqrt(count) + 1) if count % d == 0)
    return MosaicLayout(m, count // m)


def _check_rank4(x: torch.Tensor, what: str) -> None:
    if x.dim() != 4:
        raise ValueError(f"{what} must be rank-4 (B, C, H, W), got shape {tuple(x.shape)}")


def haar_dwt(x: torch.Tensor) -> torch.Tensor:
    """Orthonormal single-level 2D Haar transform, (B, C, H, W) -> (B, 4C, H/2, W/2).

    For each 2x2 block [[a, b], [c, d]]:
    ll = (a+b+c+d)/2, lh = (a-b+c-d)/2, hl = (a+b-c-d)/2, hh = (a-b-c+d)/2.
    """
    _check_rank4(x, "haar_dwt input")
    if x.shape[-2] % 2 or x.shape[-1] % 2:
        raise ValueError(f"haar_dwt needs even height and width, got {tuple(x.shape[-2:])}")
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) / 2
    lh = (a - b + c - d) / 2
    hl = (a + b - c - d) / 2
    hh = (a - b - c + d) / 2
    return torch.cat((ll, lh, hl, hh), dim=1)


def haar_idwt(y: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`haar_dwt`."""
    _check_rank4(y, "haar_idwt input")
    if y.shape[1] % 4:
        raise ValueError(f"haar_idwt needs a channel count divisible by 4, got {y.shape[1]}")
    ll, lh, hl, hh = torch.chunk(y, 4, dim=1)
    bsz, ch, h, w = ll.shape
    out = y.new_empty(bsz, ch, 2 * h, 2 * w)
    out[..., 0::2, 0::2] = (ll + lh + hl + hh) / 2
    out[..., 0::2, 1::2] = (ll - lh + hl - hh) / 2
    out[..., 1::2, 0::2] = (ll + lh - hl - hh) / 2
    out[..., 1::2, 1::2] = (ll - lh - hl + hh) / 2
    return out


@lru_cache(maxsize=None)
def _mixing_matrix_cached(m: int, n: int) -> np.ndarray:
    size = m * n
    if (m, n) == (2, 2):
        return _HAAR_2X2.copy()
    rows = [np.full(size, 1.0 / math.sqrt(size))]
    for k in range(size):
        if len(rows) == size:
            break
        v = np.zeros(size)
        v[k] = 1.0
        # modified Gram-Schmidt, run twice for stability
        for _ in range(2):
            for r in rows:
                v -= (v @ r) * r
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            rows.append(v / norm)
    out = np.stack(rows)
    out.setflags(write=False)
    return out


def mixing_matrix(m: int, n: int) -> np.ndarray:
    """Orthonormal (mn x mn) matrix mixing the polyphase components.

    Row 0 is the uniform averaging row; the rest is a Gram-Schmidt completion
    over the standard basis. The 2x2 grid uses the Haar basis instead.
    """
    if m < 1 or n < 1:
        raise ValueError(f"grid must be at least 1x1, got {m}x{n}")
    return np.array(_mixing_matrix_cached(m, n))


def _mixing_tensor(m: int, n: int, like: torch.Tensor) -> torch.Tensor:
    return torch.tensor(_mixing_matrix_cached(m, n), dtype=like.dtype, device=like.device)


def decompose(x: torch.Tensor, layout: MosaicLayout) -> tuple[torch.Tensor, torch.Tensor]:
    """Polyphase split + orthonormal mixing; returns ``(low, high)``.

    (B, C, H*m, W*n) -> low (B, C, H, W), high (B, (mn-1)C, H, W).
    """
    _check_rank4(x, "decompose input")
    m, n = layout.m, layout.n
    bsz, ch, hh, ww = x.shape
    if hh % m or ww % n:
        raise ValueError(f"image {hh}x{ww} is not divisible by the {m}x{n} grid")
    h, w = hh // m, ww // n
    phases = x.reshape(bsz, ch, h, m, w, n).permute(0, 3, 5, 1, 2, 4).reshape(bsz, m * n, ch, h, w)
    mixed = torch.einsum("kp,bpchw->bkchw", _mixing_tensor(m, n, x), phases)
    mixed = mixed.reshape(bsz, m * n * ch, h, w)
    return mixed[:, :ch], mixed[:, ch:]


def compose(low: torch.Tensor, high: torch.Tensor, layout: MosaicLayout) -> torch.Tensor:
    """Inverse of :func:`decompose`."""
    _check_rank4(low, "compose low band")
    _check_rank4(high, "compose high bands")
    m, n = layout.m, layout.n
    bsz, ch, h, w = low.shape
    if high.shape != (bsz, (m * n - 1) * ch, h, w):
        raise ValueError(
            f"high bands {tuple(high.shape)} inconsistent with low {tuple(low.shape)} "
            f"for a {m}x{n} grid"
        )
    mixed = torch.cat((low, high), dim=1).reshape(bsz, m * n, ch, h, w)
    phases = torch.einsum("kp,bkchw->bpchw", _mixing_tensor(m, n, low), mixed)
    return phases.reshape(bsz, m, n, ch, h, w).permute(0, 3, 4, 1, 5, 2).reshape(bsz, ch, h * m, w * n)


def splice_mosaic(tiles: Sequence[torch.Tensor], layout: MosaicLayout) -> torch.Tensor:
    """Place ``m*n`` tiles on the grid; tile k goes to cell (k // n, k % n)."""
    if len(tiles) != layout.count:
        raise ValueError(f"expected {layout.count} tiles for a {layout.m}x{layout.n} grid, got {len(tiles)}")
    shape = tiles[0].shape
    for t in tiles:
        _check_rank4(t, "mosaic tile")
        if t.shape != shape:
            raise ValueError(f"tile shapes differ: {tuple(shape)} vs {tuple(t.shape)}")
    if layout.tile_h is not None and (shape[-2], shape[-1]) != (layout.tile_h, layout.tile_w):
        raise ValueError(f"tiles are {shape[-2]}x{shape[-1]}, layout says {layout.tile_h}x{layout.tile_w}")
    rows = [torch.cat(tiles[r * layout.n:(r + 1) * layout.n], dim=-1) for r in range(layout.m)]
    return torch.cat(rows, dim=-2)


def unsplice_mosaic(msi: torch.Tensor, layout: MosaicLayout) -> list[torch.Tensor]:
    """Cut a mosaic back into its tiles, row-major."""
    _check_rank4(msi, "mosaic")
    hh, ww = msi.shape[-2:]
    if hh % layout.m or ww % layout.n:
        raise ValueError(f"mosaic {hh}x{ww} is not divisible by the {layout.m}x{layout.n} grid")
    th, tw = hh // layout.m, ww // layout.n
    return [
        msi[..., r * th:(r + 1) * th, c * tw:(c + 1) * tw]
        for r in range(layout.m)
        for c in range(layout.n)
    ]


def round_half_away(x: torch.Tensor) -> torch.Tensor:
    return torch.sign(x) * torch.floor(torch.abs(x) + 0.5)


def quantize(x: torch.Tensor, levels: int = 256) -> torch.Tensor:
    """Clip to [0, 1] and snap to a ``levels``-point grid.

    The rounding has a straight-through (identity) gradient; the clip keeps
    its exact gradient.
    """
    clipped = torch.clamp(x, 0.0, 1.0)
    scale = levels - 1
    snapped = round_half_away(clipped.detach() * scale) / scale
    # (clipped - clipped.detach()) is exactly zero, so the value stays on the grid
    return snapped + (clipped - clipped.detach())
