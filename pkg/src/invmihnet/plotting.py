from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import EvalReport  # noqa: E402

TABLE_COLUMNS = (
    "num_secrets", "m", "n", "dataset", "image_sets",
    "cover_psnr_mean", "cover_ssim_mean", "secret_psnr_mean", "secret_ssim_mean",
)


def plot_capacity(reports: Sequence[EvalReport], figure_out: Union[str, Path]) -> Path:
    """PSNR and SSIM against the number of hidden images. Also writes the
    merged numbers as a tab-separated table next to the figure; returns its path.
    """
    reports = sorted(reports, key=lambda r: r.num_secrets)
    counts = [r.num_secrets for r in reports]
    fig, (ax_p, ax_s) = plt.subplots(1, 2, figsize=(9, 3.6))
    for ax, key, label in ((ax_p, "psnr", "PSNR (dB)"), (ax_s, "ssim", "SSIM")):
        ax.plot(counts, [getattr(r, f"cover_{key}_mean") for r in reports], "o-", label="cover / stego")
        ax.plot(counts, [getattr(r, f"secret_{key}_mean") for r in reports], "s--", label="secret / recovery")
        ax.set_xlabel("number of secret images N")
        ax.set_ylabel(label)
        ax.set_xticks(counts)
        ax.grid(alpha=0.3)
    ax_p.legend()
    fig.tight_layout()
    figure_out = Path(figure_out)
    figure_out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(figure_out)
    plt.close(fig)

    table = figure_out.with_suffix(".tsv")
    lines = ["\t".join(TABLE_COLUMNS)]
    for r in reports:
        lines.append("\t".join(str(getattr(r, c)) for c in TABLE_COLUMNS))
    table.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return table
