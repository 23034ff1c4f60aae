"""Small natural-image corpus cut from scikit-image's bundled photographs.

Used by the test suite and the demo scripts; needs ``scikit-image``.
"""
from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

__all__ = ["SOURCE_IMAGES", "write_sample_corpus"]

SOURCE_IMAGES = ("astronaut", "chelsea", "coffee", "rocket", "immunohistochemistry", "hubble_deep_field", "retina")


def _sources() -> list[np.ndarray]:
    import skimage.data

    return [getattr(skimage.data, name)() for name in SOURCE_IMAGES]


def write_sample_corpus(directory: Union[str, Path], count: int = 16, size: int = 96, seed: int = 0) -> list[Path]:
    """Write ``count`` RGB PNG crops of ``size`` x ``size``, round-robin over
    the source photographs at random offsets.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    sources = _sources()
    paths = []
    for i in range(count):
        img = sources[i % len(sources)]
        top = int(rng.integers(0, img.shape[0] - size + 1))
        left = int(rng.integers(0, img.shape[1] - size + 1))
        path = out / f"img_{i:03d}.png"
        Image.fromarray(np.ascontiguousarray(img[top:top + size, left:left + size])).save(path)
        paths.append(path)
    return paths
