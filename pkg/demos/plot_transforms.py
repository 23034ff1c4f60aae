"""
Haar bands and the m x n decomposition
======================================

Splits a photograph with one Haar level and with the generalized
polyphase decomposition used to shrink secrets, then shows that both are
orthonormal: nothing is lost and the energy is unchanged.
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from invmihnet.imageio import load_image
from invmihnet.sample_data import write_sample_corpus
from invmihnet.transforms import MosaicLayout, compose, decompose, haar_dwt, haar_idwt, mixing_matrix

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
paths = write_sample_corpus(out / "images", count=1, size=192, seed=0)
x = load_image(paths[0])

# one Haar level: 4 bands of half size, low band first
bands = haar_dwt(x)
print("haar bands:", tuple(bands.shape), " reconstruction error:", (haar_idwt(bands) - x).abs().max().item())

fig, axes = plt.subplots(1, 4, figsize=(10, 2.8))
for k, (ax, name) in enumerate(zip(axes, ["ll", "lh", "hl", "hh"])):
    band = bands[0, 3 * k:3 * k + 3].mean(0).numpy()
    ax.imshow(band, cmap="gray")
    ax.set_title(name)
    ax.axis("off")
fig.tight_layout()
fig.savefig(out / "haar_bands.png")

# the 2x3 grid: 6 polyphase components mixed by an orthonormal matrix
mat = mixing_matrix(2, 3)
print("mixing matrix 2x3, first row:", np.round(mat[0], 4))
print("|M M^T - I| =", np.abs(mat @ mat.T - np.eye(6)).max())

lay = MosaicLayout(2, 3)
low, high = decompose(x, lay)
print("low band", tuple(low.shape), "high bands", tuple(high.shape))
back = compose(low, high, lay)
print("round trip error:", (back - x).abs().max().item())
ratio = (low.double().square().sum() + high.double().square().sum()) / x.double().square().sum()
print("energy ratio:", ratio.item())

# the low band is a (scaled) box-filtered thumbnail of the image
thumb = (low / np.sqrt(6)).clamp(0, 1)[0].permute(1, 2, 0).numpy()
plt.imsave(out / "low_band_2x3.png", thumb)
print("figures in", out)
