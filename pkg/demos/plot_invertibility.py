"""
Invertible blocks in practice
=============================

Builds the rescaling module with random weights, downsizes an image, and
brings it back exactly from the low band plus the true residual. With a
sampled residual instead, the result is close but not identical.
"""
import sys
from pathlib import Path

import torch

from invmihnet.imageio import load_image, save_png
from invmihnet.iir import IIR
from invmihnet.sample_data import write_sample_corpus
from invmihnet.transforms import MosaicLayout

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
x = load_image(write_sample_corpus(out / "images", count=1, size=128, seed=1)[0])

torch.manual_seed(0)
iir = IIR(MosaicLayout(2, 2), num_blocks=8)

# the last conv of every subnetwork starts at zero, so a fresh module is
# just the fixed decomposition; give those convs some weight
with torch.no_grad():
    for block in iir.blocks:
        for net in (block.phi, block.rho, block.psi):
            fan_in = net.out.weight[0].numel()
            net.out.weight.normal_(0, 0.5 / fan_in**0.5)

with torch.no_grad():
    tile, r_high = iir.downscale(x)
    exact = iir.upscale(tile, r_high)
    guess = iir.upscale(tile, torch.randn_like(r_high))

print("image", tuple(x.shape), "-> tile", tuple(tile.shape), "+ residual", tuple(r_high.shape))
print("with the true residual, max error:", (exact - x).abs().max().item())
print("with a sampled residual, mean error:", (guess - x).abs().mean().item())

save_png(tile.clamp(0, 1) / 2, out / "tile.png")
save_png(guess, out / "upscaled_from_noise.png")
