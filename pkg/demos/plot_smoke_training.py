"""
A short training run
====================

Trains a reduced network (2 rescaling blocks, 4 hiding blocks) jointly on
64x64 patches of the sample photographs and plots the loss and the
cover/stego PSNR. The first step has infinite PSNR because the untrained
network returns the cover unchanged; the PSNR then drops as information
is pushed into the stego and climbs back as training goes on.

Usage: python3 plot_smoke_training.py [out_dir] [iterations]
"""
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from invmihnet.config import TrainConfig
from invmihnet.model import InvMIHNet
from invmihnet.sample_data import write_sample_corpus
from invmihnet.training import train

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
iterations = int(sys.argv[2]) if len(sys.argv) > 2 else 300
data = out / "train_images"
write_sample_corpus(data, count=16, size=96, seed=0)

cfg = TrainConfig(stage="joint", iterations=iterations, batch_size=2, patch_size=64,
                  iir_blocks=2, iih_blocks=4, seed=7, checkpoint_interval=100)


def show(rec):
    if rec["iteration"] % 25 == 0:
        print(f"iter {rec['iteration']:4d}  total {rec['total']:.4f}  stego PSNR {rec['psnr_cover_stego']:.2f}")


result = train(InvMIHNet(cfg.model_config(), seed=cfg.seed), cfg, data, out_dir=out / "run", on_record=show)
steps = [r["iteration"] for r in result.records]
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
ax1.semilogy(steps, [r["total"] for r in result.records])
ax1.set_xlabel("iteration")
ax1.set_ylabel("total loss")
ax2.plot(steps, [r["psnr_cover_stego"] if math.isfinite(r["psnr_cover_stego"]) else float("nan") for r in result.records])
ax2.set_xlabel("iteration")
ax2.set_ylabel("cover/stego PSNR (dB)")
fig.tight_layout()
fig.savefig(out / "smoke_training.png")
print("checkpoint", out / "run" / "final.ckpt")
