"""
More secrets, smaller tiles
===========================

For N in {4, 6, 8, 9, 16} the secrets are shrunk onto an m x n grid that
fills the cover. This prints the tile size and parameter count per N and
draws the sweep figure from untrained evaluations (the numbers are those
of an initialized model, so only the mechanics are meaningful).
"""
import sys
from pathlib import Path

from invmihnet.metrics import evaluate
from invmihnet.model import InvMIHNet, ModelConfig
from invmihnet.plotting import plot_capacity
from invmihnet.sample_data import write_sample_corpus
from invmihnet.transforms import layout_for_count

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
size = 96
reports = []
for count in (4, 6, 8, 9, 16):
    lay = layout_for_count(count)
    data = out / f"sweep_{count}"
    write_sample_corpus(data, count=count + 1, size=size, seed=count)
    # two blocks each keep this quick; the parameter trend is the same at full depth
    model = InvMIHNet(ModelConfig(lay.m, lay.n, iir_blocks=2, iih_blocks=2), seed=0)
    rep = evaluate(model, data, seed=0, dataset_name=f"sample-{count}")
    reports.append(rep)
    print(f"N={count:2d}  grid {lay.m}x{lay.n}  tile {size // lay.m}x{size // lay.n}  "
          f"params {rep.parameters:,}  recovery PSNR {rep.secret_psnr_mean:.2f} dB")

table = plot_capacity(reports, out / "capacity.png")
print("figure", out / "capacity.png", "table", table)
