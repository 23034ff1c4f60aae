"""Deterministic random-patch batches from an image directory."""
from __future__ import annotations

import logging
from collections import OrderedDict
from pathlib import Path
from typing import Union

import numpy as np
import torch
from PIL import Image

from .imageio import list_images

logger = logging.getLogger(__name__)

__all__ = ["DataError", "PatchDataset", "batch_rng"]


class DataError(RuntimeError):
    pass


def batch_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(step)])


class PatchDataset:
    """Image files large enough for ``patch_size`` crops.

    Undecodable, too-small or alpha images are skipped with one warning each
    at construction. ``batch(step)`` depends only on ``(seed, step)``.
    """

    def __init__(self, root: Union[str, Path], patch_size: int, count: int, seed: int = 0, cache_size: int = 32):
        self.root = Path(root)
        self.patch_size = patch_size
        self.count = count
        self.seed = seed
        self._cache: OrderedDict[Path, np.ndarray] = OrderedDict()
        self._cache_size = cache_size
        try:
            files = list_images(self.root)
        except FileNotFoundError as exc:
            raise DataError(str(exc)) from exc
        self.files = [f for f in files if self._usable(f)]
        if len(self.files) < count + 1:
            raise DataError(
                f"{self.root}: need at least {count + 1} usable images "
                f"(1 cover + {count} secrets), found {len(self.files)}"
            )

    def _usable(self, path: Path) -> bool:
        try:
            with Image.open(path) as im:
                im.verify()
            with Image.open(path) as im:
                bands, (w, h) = im.getbands(), im.size
        except Exception as exc:  # PIL raises a zoo of types for broken files
            logger.warning("skipping unreadable image %s: %s", path, exc)
            return False
        if "A" in bands:
            logger.warning("skipping %s: alpha channel", path)
            return False
        if min(w, h) < self.patch_size:
            logger.warning("skipping %s: %dx%d is smaller than the %d patch", path, w, h, self.patch_size)
            return False
        return True

    def _pixels(self, path: Path) -> np.ndarray:
        arr = self._cache.get(path)
        if arr is None:
            try:
                with Image.open(path) as im:
                    arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            except Exception as exc:
                raise DataError(f"failed to decode {path}: {exc}") from exc
            self._cache[path] = arr
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(path)
        return arr

    def _patch(self, path: Path, rng: np.random.Generator) -> np.ndarray:
        arr = self._pixels(path)
        p = self.patch_size
        top = int(rng.integers(0, arr.shape[0] - p + 1))
        left = int(rng.integers(0, arr.shape[1] - p + 1))
        crop = arr[top:top + p, left:left + p]
        if rng.random() < 0.5:
            crop = crop[:, ::-1]
        if rng.random() < 0.5:
            crop = crop[::-1, :]
        return crop

    def batch(self, step: int, batch_size: int) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Return ``(cover (B,3,P,P), [secret_k (B,3,P,P)] * N)``."""
        rng = batch_rng(self.seed, step)
        slots: list[list[np.ndarray]] = [[] for _ in range(self.count + 1)]
        for _ in range(batch_size):
            picks = rng.choice(len(self.files), size=self.count + 1, replace=False)
            for slot, idx in zip(slots, picks):
                slot.append(self._patch(self.files[int(idx)], rng))
        tensors = [
            torch.from_numpy(np.stack(s).transpose(0, 3, 1, 2).copy()).float() / 255.0 for s in slots
        ]
        return tensors[0], tensors[1:]
