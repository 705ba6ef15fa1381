"""Hybrid training objective: BCE + soft IoU + enhanced-alignment loss.

Losses are built from taped primitives so the full objective is
differentiable.  The ground truth enters as a constant; only the prediction
receives gradient.

Conventions:

* BCE clamps the prediction to [eps, 1-eps] with eps = 1e-7 before the logs;
  values strictly inside the band are untouched.
* IoU uses the soft formulation with a +1 smoothing term on both sides of
  the ratio, so empty masks never divide by zero.
* The alignment loss is one minus the soft (unthresholded) enhanced
  alignment, the differentiable counterpart of the evaluation measure, with
  a 1e-8 stabilizer in the alignment denominator.  Degenerate ground truth
  falls back to the same mean-based convention the metric uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_ops as T
from .tensor_ops import ContractError, ShapeError, Tape, Tensor

__all__ = [
    "GroundTruth",
    "Prediction",
    "bce_loss",
    "em_loss",
    "hybrid_loss",
    "iou_loss",
]

BCE_EPS = 1e-7
ALIGN_EPS = 1e-8
NUM_HEADS = 3


@dataclass(frozen=True)
class GroundTruth:
    """Strictly binary H x W mask."""

    mask: Tensor

    def __post_init__(self):
        if self.mask.rank != 2:
            raise ShapeError("GroundTruth: mask must be rank 2")
        if not np.isin(self.mask.data, (0.0, 1.0)).all():
            raise ContractError("GroundTruth: mask must contain only 0 and 1")


@dataclass(frozen=True)
class Prediction:
    """Three co-supervised saliency maps in [0, 1] at ground-truth resolution."""

    maps: tuple[Tensor, ...]

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        if len(self.maps) != NUM_HEADS:
            raise ContractError(
                f"Prediction: expected {NUM_HEADS} maps, got {len(self.maps)}"
            )
        shape = self.maps[0].shape
        for m in self.maps:
            if m.rank != 2 or m.shape != shape:
                raise ShapeError("Prediction: maps must be rank 2 with equal extents")
            if m.data.min() < 0.0 or m.data.max() > 1.0:
                raise ContractError("Prediction: map values must lie in [0, 1]")


def _check_pair(p: Tensor, g: GroundTruth, op: str) -> None:
    if p.rank != 2:
        raise ShapeError(f"{op}: prediction must be rank 2")
    if p.shape != g.mask.shape:
        raise ShapeError(f"{op}: extents differ, {p.shape} vs {g.mask.shape}")


def _one_minus(x: Tensor, tape: Tape | None) -> Tensor:
    return T.add_scalar(T.neg(x, tape=tape), 1.0, tape=tape)


def bce_loss(p: Tensor, g: GroundTruth, tape: Tape | None = None) -> Tensor:
    """Mean binary cross entropy with the prediction clamped to [eps, 1-eps]."""
    _check_pair(p, g, "bce_loss")
    pc = T.clip(p, BCE_EPS, 1.0 - BCE_EPS, tape=tape)
    pos = T.hadamard(g.mask, T.log(pc, tape=tape), tape=tape)
    neg_mask = Tensor._wrap(1.0 - g.mask.data)
    neg = T.hadamard(neg_mask, T.log(_one_minus(pc, tape), tape=tape), tape=tape)
    return T.neg(T.mean_all(T.add(pos, neg, tape=tape), tape=tape), tape=tape)


def iou_loss(p: Tensor, g: GroundTruth, tape: Tape | None = None) -> Tensor:
    """Soft intersection-over-union loss with +1 smoothing."""
    _check_pair(p, g, "iou_loss")
    prod = T.hadamard(p, g.mask, tape=tape)
    inter = T.sum_all(prod, tape=tape)
    union = T.sum_all(T.sub(T.add(p, g.mask, tape=tape), prod, tape=tape), tape=tape)
    ratio = T.divide(
        T.add_scalar(inter, 1.0, tape=tape),
        T.add_scalar(union, 1.0, tape=tape),
        tape=tape,
    )
    return _one_minus(ratio, tape)


def em_loss(p: Tensor, g: GroundTruth, tape: Tape | None = None) -> Tensor:
    """One minus the soft enhanced alignment of the prediction with the mask."""
    _check_pair(p, g, "em_loss")
    gt = g.mask.data
    gt_mean = gt.mean()
    if gt_mean == 0.0:
        return T.mean_all(p, tape=tape)
    if gt_mean == 1.0:
        return _one_minus(T.mean_all(p, tape=tape), tape)
    xi_g = Tensor._wrap(gt - gt_mean)
    xi_g_sq = Tensor._wrap((gt - gt_mean) ** 2)
    p_mean = T.mean_all(p, tape=tape)
    xi_p = T.sub(p, T.expand_scalar(p_mean, p.shape, tape=tape), tape=tape)
    num = T.mul_scalar(T.hadamard(xi_g, xi_p, tape=tape), 2.0, tape=tape)
    den = T.add_scalar(
        T.add(xi_g_sq, T.hadamard(xi_p, xi_p, tape=tape), tape=tape),
        ALIGN_EPS,
        tape=tape,
    )
    align = T.divide(num, den, tape=tape)
    shifted = T.add_scalar(align, 1.0, tape=tape)
    phi = T.mul_scalar(T.hadamard(shifted, shifted, tape=tape), 0.25, tape=tape)
    return _one_minus(T.mean_all(phi, tape=tape), tape)


def hybrid_loss(pred: Prediction, g: GroundTruth, tape: Tape | None = None) -> Tensor:
    """Sum of BCE, IoU and alignment losses over the three supervised maps."""
    total: Tensor | None = None
    for p in pred.maps:
        head = T.add(
            T.add(bce_loss(p, g, tape=tape), iou_loss(p, g, tape=tape), tape=tape),
            em_loss(p, g, tape=tape),
            tape=tape,
        )
        total = head if total is None else T.add(total, head, tape=tape)
    assert total is not None
    return total
