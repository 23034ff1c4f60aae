"""
Hiding four images in one
=========================

Runs the whole forward and reverse path with an untrained network. At
initialization the stego image equals the cover (nothing has been
learned yet), and the recovered secrets are only bicubic-like
thumbnails. Training is what moves information into the stego.
"""
import sys
from pathlib import Path

import torch

from invmihnet.imageio import load_image, save_png
from invmihnet.metrics import psnr, ssim
from invmihnet.model import InvMIHNet, ModelConfig
from invmihnet.sample_data import write_sample_corpus

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
paths = write_sample_corpus(out / "images", count=5, size=128, seed=2)
cover, *secrets = [load_image(p) for p in paths]

model = InvMIHNet(ModelConfig(m=2, n=2), seed=0).eval()
print(f"{sum(p.numel() for p in model.parameters()):,} parameters")

with torch.no_grad():
    hidden = model.hide(cover, secrets)
    recovered, msi_hat = model.recover(hidden.stego, seed=0)

print("mosaic", tuple(hidden.msi.shape), "stego", tuple(hidden.stego.shape))
print(f"cover/stego   PSNR {psnr(cover, hidden.stego):.2f} dB  SSIM {ssim(cover, hidden.stego):.4f}")
for k, (s, r) in enumerate(zip(secrets, recovered)):
    print(f"secret {k}      PSNR {psnr(s, r.clamp(0, 1)):.2f} dB  SSIM {ssim(s, r.clamp(0, 1)):.4f}")

save_png(hidden.stego, out / "stego.png")
save_png((hidden.msi / 2).clamp(0, 1), out / "mosaic.png")
for k, r in enumerate(recovered):
    save_png(r, out / f"recovered_{k}.png")
