"""Invertible mosaic image hiding: conceal N = m x n secret images in one cover."""

__version__ = "0.1.0"

from .coupling import DenseSubnet, InvBlock, SubnetConfig, clamp_scale
from .iih import IIH, ConcealOutput
from .iir import IIR
from .latent import sample_latent
from .losses import LossBreakdown, LossWeights, js_divergence, soft_histogram, total_loss
from .metrics import count_params, psnr, ssim
from .model import InvMIHNet, ModelConfig
from .transforms import (
    MosaicLayout,
    compose,
    decompose,
    haar_dwt,
    haar_idwt,
    layout_for_count,
    mixing_matrix,
    quantize,
    splice_mosaic,
    unsplice_mosaic,
)

__all__ = [
    "ConcealOutput",
    "DenseSubnet",
    "IIH",
    "IIR",
    "InvBlock",
    "InvMIHNet",
    "LossBreakdown",
    "LossWeights",
    "ModelConfig",
    "MosaicLayout",
    "SubnetConfig",
    "clamp_scale",
    "compose",
    "count_params",
    "decompose",
    "haar_dwt",
    "haar_idwt",
    "js_divergence",
    "layout_for_count",
    "mixing_matrix",
    "psnr",
    "quantize",
    "sample_latent",
    "soft_histogram",
    "splice_mosaic",
    "ssim",
    "total_loss",
    "unsplice_mosaic",
]
