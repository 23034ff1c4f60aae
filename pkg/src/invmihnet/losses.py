"""Training objective: histogram JS divergence plus five pixel-space terms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F

from .transforms import MosaicLayout, haar_dwt

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "soft_histogram",
    "js_divergence",
    "total_loss",
    "bicubic_downscale",
    "low_band",
    "TERM_NAMES",
]

TERM_NAMES = ("js", "rec_l1", "guide", "msi_consistency", "conceal", "low_freq")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 4.0
    lambda3: float = 5.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossBreakdown:
    """The six loss terms (0-d tensors) and their weighted total."""

    js: torch.Tensor
    rec_l1: torch.Tensor
    guide: torch.Tensor
    msi_consistency: torch.Tensor
    conceal: torch.Tensor
    low_freq: torch.Tensor
    weights: LossWeights

    @property
    def total(self) -> torch.Tensor:
        w = self.weights
        return (
            self.js
            + w.lambda1 * self.rec_l1
            + w.lambda2 * self.guide
            + w.lambda3 * self.msi_consistency
            + self.conceal
            + self.low_freq
        )

    def as_dict(self) -> dict[str, float]:
        out = {name: getattr(self, name).item() for name in TERM_NAMES}
        out["total"] = self.total.item()
        return out


def soft_histogram(x: torch.Tensor, bins: int = 64) -> torch.Tensor:
    """Per-channel intensity histogram with triangular (hat) kernels.

    Centers are ``k / (bins - 1)``; every pixel splits its unit mass between
    the two nearest centers, so the result is piecewise linear in ``x``.
    Values are clipped to [0, 1]. Returns ``(C, bins)`` rows summing to 1.
    """
    if bins < 2:
        raise ValueError("need at least two bins")
    if x.numel() == 0:
        raise ValueError("cannot build a histogram of an empty tensor")
    ch = x.shape[1]
    flat = x.transpose(0, 1).reshape(ch, -1).clamp(0.0, 1.0)
    pos = flat * (bins - 1)
    lower = torch.floor(pos.detach()).clamp(max=bins - 2)
    frac = pos - lower
    idx = lower.long()
    hist = flat.new_zeros(ch, bins)
    hist = hist.scatter_add(1, idx, 1.0 - frac).scatter_add(1, idx + 1, frac)
    return hist / flat.shape[1]


def _kl_to_mid(p: torch.Tensor, mid: torch.Tensor) -> torch.Tensor:
    pos = p > 0
    safe_p = torch.where(pos, p, torch.ones_like(p))
    safe_m = torch.where(pos, mid, torch.ones_like(mid))
    return torch.where(pos, p * torch.log(safe_p / safe_m), torch.zeros_like(p)).sum(-1)


def js_divergence(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    """Jensen-Shannon divergence (natural log) along the last axis."""
    p = torch.as_tensor(p)
    q = torch.as_tensor(q, dtype=p.dtype)
    if p.shape != q.shape:
        raise ValueError(f"distributions differ in shape: {tuple(p.shape)} vs {tuple(q.shape)}")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("probabilities must be non-negative")
    mid = 0.5 * (p + q)
    return 0.5 * _kl_to_mid(p, mid) + 0.5 * _kl_to_mid(q, mid)


def low_band(x: torch.Tensor) -> torch.Tensor:
    return haar_dwt(x)[:, : x.shape[1]]


def _mse(a: Optional[torch.Tensor], b: Optional[torch.Tensor], zero: torch.Tensor) -> torch.Tensor:
    if a is None or b is None:
        return zero
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in loss term: {tuple(a.shape)} vs {tuple(b.shape)}")
    return F.mse_loss(a, b)


def total_loss(
    x_s: Optional[torch.Tensor] = None,
    x_rs: Optional[torch.Tensor] = None,
    x_ds: Optional[torch.Tensor] = None,
    x_ds_hat: Optional[torch.Tensor] = None,
    x_ref: Optional[torch.Tensor] = None,
    x_c: Optional[torch.Tensor] = None,
    x_stego: Optional[torch.Tensor] = None,
    weights: LossWeights = LossWeights(),
    bins: int = 64,
) -> LossBreakdown:
    """Evaluate the six terms. A term whose inputs are missing is zero,
    which is how the warm-up stages restrict the objective.

    Secrets may be given batched along dim 0 (all N stacked). Squared terms
    are mean squared errors; the reconstruction term is mean absolute error.
    """
    anchor = next(t for t in (x_s, x_ds, x_c) if t is not None)
    zero = anchor.new_zeros(())
    if x_s is not None and x_rs is not None:
        if x_s.shape != x_rs.shape:
            raise ValueError(f"secret {tuple(x_s.shape)} vs recovery {tuple(x_rs.shape)}")
        js = js_divergence(soft_histogram(x_s, bins), soft_histogram(x_rs, bins)).mean()
        rec = F.l1_loss(x_rs, x_s)
    else:
        js = rec = zero
    low = zero
    if x_c is not None and x_stego is not None:
        low = _mse(low_band(x_c), low_band(x_stego), zero)
    out = LossBreakdown(
        js=js,
        rec_l1=rec,
        guide=_mse(x_ds, x_ref, zero),
        msi_consistency=_mse(x_ds, x_ds_hat, zero),
        conceal=_mse(x_c, x_stego, zero),
        low_freq=low,
        weights=weights,
    )
    if not torch.isfinite(out.total):
        raise FloatingPointError(f"non-finite loss: {out.as_dict()}")
    return out


def bicubic_downscale(x: torch.Tensor, layout: MosaicLayout) -> torch.Tensor:
    """Anti-aliased bicubic (a = -0.5) downscale by (m, n)."""
    h, w = x.shape[-2:]
    if h % layout.m or w % layout.n:
        raise ValueError(f"image {h}x{w} is not divisible by the {layout.m}x{layout.n} grid")
    if layout.m == 1 and layout.n == 1:
        return x
    return F.interpolate(
        x, size=(h // layout.m, w // layout.n), mode="bicubic", align_corners=False, antialias=True
    )
