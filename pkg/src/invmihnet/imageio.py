"""8-bit RGB PNG in/out and directory listing."""
from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

__all__ = ["ImageError", "load_image", "save_png", "to_uint8", "list_images", "IMAGE_SUFFIXES"]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")

PathLike = Union[str, Path]


class ImageError(ValueError):
    pass


def list_images(directory: PathLike) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    return sorted(p for p in root.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def load_image(path: PathLike) -> torch.Tensor:
    """Read an RGB (or grayscale) image as a (1, 3, H, W) float32 tensor in [0, 1].

    Images with an alpha channel are rejected.
    """
    try:
        with Image.open(path) as im:
            if "A" in im.getbands() or im.mode == "P" and "transparency" in im.info:
                raise ImageError(f"{path}: alpha channels are not supported; flatten to RGB first")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"{path}: cannot decode image ({exc})") from exc
    return torch.from_numpy(arr.copy()).permute(2, 0, 1).unsqueeze(0).float() / 255.0


def to_uint8(x: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) or (3, H, W) in [0, 1] -> (H, W, 3) uint8, rounding half up."""
    if x.dim() == 4:
        if x.shape[0] != 1:
            raise ValueError("to_uint8 takes a single image")
        x = x[0]
    arr = torch.floor(x.detach().clamp(0, 1) * 255 + 0.5).to(torch.uint8)
    return arr.permute(1, 2, 0).cpu().numpy()


def save_png(x: torch.Tensor, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(x), mode="RGB").save(path, format="PNG")
