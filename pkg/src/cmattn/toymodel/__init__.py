"""Desk-scale dual-branch saliency model with a mutual-attention decoder.

A three-stage strided convolutional encoder per branch stands in for a
pretrained backbone; a simplified dilated-convolution block stands in for
receptive field blocks.  Everything else follows the full design: multi-level
concatenation, the (cascaded) mutual attention decoder, three supervision
heads, the hybrid loss, Adam training on synthetic RGB-D scenes, and the
five-variant ablation lattice.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import VARIANTS, ToyConfig, variant_flags
from .data import SyntheticSample, gen_synthetic
from .model import (
    decode,
    encode,
    init_params,
    model_forward,
    parameter_count,
    rfb_lite,
)
from .optim import AdamState, adam_step
from .train import EpochRow, LossTrace, TrainResult, run_ablation, train

__all__ = [
    "AdamState",
    "EpochRow",
    "LossTrace",
    "SyntheticSample",
    "ToyConfig",
    "TrainResult",
    "VARIANTS",
    "adam_step",
    "decode",
    "encode",
    "gen_synthetic",
    "init_params",
    "load_checkpoint",
    "model_forward",
    "parameter_count",
    "rfb_lite",
    "run_ablation",
    "save_checkpoint",
    "train",
    "variant_flags",
]
