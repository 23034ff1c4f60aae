"""PSNR/SSIM, parameter counting and dataset-level evaluation."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .imageio import list_images, load_image
from .transforms import MosaicLayout, quantize

logger = logging.getLogger(__name__)

__all__ = ["psnr", "ssim", "count_params", "EvalReport", "evaluate", "make_sets", "compatible_size"]

SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_WINDOW, SSIM_SIGMA = 11, 1.5


def psnr(a: torch.Tensor, b: torch.Tensor, data_range: float = 1.0) -> float:
    """PSNR in dB over all pixels and channels; ``inf`` for identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    mse = torch.mean((a.detach().double() - b.detach().double()) ** 2).item()
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


@lru_cache(maxsize=4)
def _gaussian_window(size: int, sigma: float) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def _ssim_map(a: torch.Tensor, b: torch.Tensor, data_range: float) -> tuple[torch.Tensor, torch.Tensor]:
    ch = a.shape[1]
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA).to(a.device).expand(ch, 1, SSIM_WINDOW, SSIM_WINDOW)

    def blur(x):
        return F.conv2d(x, win, groups=ch)

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a**2
    var_b = blur(b * b) - mu_b**2
    cov = blur(a * b) - mu_a * mu_b
    luminance = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    contrast_structure = (2 * cov + c2) / (var_a + var_b + c2)
    return luminance, contrast_structure


def ssim(a: torch.Tensor, b: torch.Tensor, data_range: float = 1.0) -> float:
    """Mean SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, valid
    filtering, computed per channel in double precision and averaged.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() != 4:
        raise ValueError("ssim expects (B, C, H, W) tensors")
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    lum, cs = _ssim_map(a.detach().double(), b.detach().double(), data_range)
    return (lum * cs).mean().item()


def count_params(models: Union[nn.Module, Iterable[nn.Module]]) -> int:
    if isinstance(models, nn.Module):
        models = [models]
    seen: set[int] = set()
    total = 0
    for model in models:
        for p in model.parameters():
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                total += p.numel()
    return total


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=np.float64)
    if np.isinf(arr).any():
        return (math.inf, 0.0) if np.isinf(arr).all() else (math.inf, math.inf)
    return float(arr.mean()), float(arr.std())


@dataclass
class EvalReport:
    dataset: str
    num_secrets: int
    m: int
    n: int
    image_sets: int
    parameters: int
    cover_psnr_mean: float
    cover_psnr_std: float
    cover_ssim_mean: float
    cover_ssim_std: float
    secret_psnr_mean: float
    secret_psnr_std: float
    secret_ssim_mean: float
    secret_ssim_std: float
    seconds_per_set: Optional[float] = None
    seed: int = 0
    latent_mode: str = "normal"

    def to_json(self) -> str:
        def enc(v):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
            return v

        return json.dumps({k: enc(v) for k, v in asdict(self).items()}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        return cls(**{k: float(v) if v in ("inf", "-inf", "nan") else v for k, v in raw.items()})

    def save(self, path: Union[str, Path]) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EvalReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def table(self) -> str:
        def cell(mean, std, fmt):
            if math.isinf(mean):
                return "inf"
            return f"{mean:{fmt}} +/- {std:{fmt}}"

        rows = [
            ("dataset", self.dataset),
            ("secrets (m x n)", f"{self.num_secrets} ({self.m}x{self.n})"),
            ("image sets", str(self.image_sets)),
            ("parameters", f"{self.parameters:,}"),
            ("cover/stego PSNR (dB)", cell(self.cover_psnr_mean, self.cover_psnr_std, ".2f")),
            ("cover/stego SSIM", cell(self.cover_ssim_mean, self.cover_ssim_std, ".4f")),
            ("secret/recovery PSNR (dB)", cell(self.secret_psnr_mean, self.secret_psnr_std, ".2f")),
            ("secret/recovery SSIM", cell(self.secret_ssim_mean, self.secret_ssim_std, ".4f")),
        ]
        if self.seconds_per_set is not None:
            rows.append(("seconds per set", f"{self.seconds_per_set:.3f}"))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def compatible_size(h: int, w: int, layout: MosaicLayout) -> tuple[int, int]:
    """Largest (H, W) <= (h, w) splittable by the grid and by one Haar level."""
    step_h = math.lcm(2, layout.m)
    step_w = math.lcm(2, layout.n)
    return h - h % step_h, w - w % step_w


def _center_crop(x: torch.Tensor, h: int, w: int) -> torch.Tensor:
    top = (x.shape[-2] - h) // 2
    left = (x.shape[-1] - w) // 2
    return x[..., top:top + h, left:left + w]


def make_sets(files: Sequence[Path], count: int, seed: int) -> list[list[Path]]:
    """Disjoint (cover, secret_1..secret_N) tuples from consecutive sorted
    files; the order in which tuples are visited is shuffled by ``seed``.
    """
    files = sorted(files)
    size = count + 1
    sets = [list(files[i:i + size]) for i in range(0, len(files) - size + 1, size)]
    order = np.random.default_rng(seed).permutation(len(sets))
    return [sets[i] for i in order]


def _load_set(paths: Sequence[Path], layout: MosaicLayout) -> list[torch.Tensor]:
    images = [load_image(p) for p in paths]
    h = min(im.shape[-2] for im in images)
    w = min(im.shape[-1] for im in images)
    th, tw = compatible_size(h, w, layout)
    if th < 2 or tw < 2:
        raise ValueError(f"images in set starting at {paths[0]} are too small")
    if any(im.shape[-2:] != (th, tw) for im in images):
        logger.warning("center-cropping set starting at %s to %dx%d", paths[0].name, th, tw)
        images = [_center_crop(im, th, tw) for im in images]
    return images


@torch.no_grad()
def evaluate(
    model,
    dataset_dir: Union[str, Path],
    seed: int = 0,
    latent_mode: str = "normal",
    max_sets: Optional[int] = None,
    dataset_name: Optional[str] = None,
    timing: bool = False,
) -> EvalReport:
    """Conceal and reveal every image set in ``dataset_dir``.

    Recovered secrets are scored after 8-bit quantization, the same as the
    PNGs the reveal command writes. Latents for set ``i`` come from a
    generator seeded with ``(seed, i)``.
    """
    layout = model.layout
    files = list_images(dataset_dir)
    sets = make_sets(files, layout.count, seed)
    if max_sets is not None:
        sets = sets[:max_sets]
    if not sets:
        raise ValueError(f"{dataset_dir}: need at least {layout.count + 1} images for one set")
    was_training = model.training
    model.eval()
    cover_p, cover_s, sec_p, sec_s = [], [], [], []
    start = time.perf_counter()
    try:
        for i, paths in enumerate(sets):
            cover, *secrets = _load_set(paths, layout)
            hidden = model.hide(cover, secrets)
            gen_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
            generator = torch.Generator().manual_seed(gen_seed) if latent_mode == "normal" else None
            recovered, _ = model.recover(hidden.stego, mode=latent_mode, generator=generator)
            cover_p.append(psnr(cover, hidden.stego))
            cover_s.append(ssim(cover, hidden.stego))
            for sec, rec in zip(secrets, recovered):
                rec = quantize(rec)
                sec_p.append(psnr(sec, rec))
                sec_s.append(ssim(sec, rec))
    finally:
        model.train(was_training)
    elapsed = (time.perf_counter() - start) / len(sets)
    return EvalReport(
        dataset=dataset_name or Path(dataset_dir).name,
        num_secrets=layout.count,
        m=layout.m,
        n=layout.n,
        image_sets=len(sets),
        parameters=count_params(model),
        cover_psnr_mean=_mean_std(cover_p)[0],
        cover_psnr_std=_mean_std(cover_p)[1],
        cover_ssim_mean=_mean_std(cover_s)[0],
        cover_ssim_std=_mean_std(cover_s)[1],
        secret_psnr_mean=_mean_std(sec_p)[0],
        secret_psnr_std=_mean_std(sec_p)[1],
        secret_ssim_mean=_mean_std(sec_s)[0],
        secret_ssim_std=_mean_std(sec_s)[1],
        seconds_per_set=elapsed if timing else None,
        seed=seed,
        latent_mode=latent_mode,
    )
