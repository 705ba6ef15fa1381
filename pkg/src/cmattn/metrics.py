"""Salient-object evaluation suite: MAE, F-measure, E-measure, S-measure, curves.

All metrics operate on a prediction in [0, 1] and a strictly binary ground
truth of identical extent.  Binarization thresholds live on the [0, 255]
scale of 8-bit saliency maps.  Per-image computation is pure; dataset
aggregation uses exact (order-independent) summation.

Pinned conventions, mirrored by the independent scalar-loop oracles in the
test suite:

* F-measure: beta^2 = 0.3; precision/recall read 0 when their denominator is
  empty; the measure reads 0 when its own denominator vanishes.
* Adaptive threshold: twice the mean saliency on the 255 scale, clamped.
* E-measure: alignment of mean-centered maps, A = 2*xg*xp/(xg^2+xp^2+eps)
  with machine-epsilon eps, phi = (A+1)^2/4, averaged over all pixels.
  Degenerate ground truth scores one minus the binarized map's error rate.
* S-measure: alpha = 0.5 blend of object similarity (foreground/background
  mean-and-deviation score weighted by foreground ratio; sample standard
  deviation, zero for single-element regions) and region similarity
  (centroid quadrant split, SSIM-like score per quadrant with N-1
  normalization, area-weighted; empty quadrants contribute zero at zero
  weight).  Degenerate ground truth scores 1-mean(P) (all background) or
  mean(P) (all foreground).  The final value is clamped to [0, 1].
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .tensor_ops import ContractError, ShapeError

__all__ = [
    "EvalPair",
    "MetricReport",
    "NUM_THRESHOLDS",
    "adaptive_threshold",
    "aggregate",
    "e_measure",
    "evaluate",
    "evaluate_per_image",
    "f_measure",
    "mae",
    "s_measure",
    "single_report",
]

NUM_THRESHOLDS = 256

_EPS = float(np.finfo(np.float64).eps)
_BETA_SQ = 0.3
_ALPHA = 0.5


@dataclass(frozen=True)
class EvalPair:
    """One prediction/ground-truth pair of identical H x W extents."""

    pred: np.ndarray
    gt: np.ndarray

    def __post_init__(self):
        pred = np.asarray(self.pred, dtype=np.float64)
        gt = np.asarray(self.gt, dtype=np.float64)
        if pred.ndim != 2 or gt.ndim != 2:
            raise ShapeError("EvalPair: prediction and ground truth must be rank 2")
        if pred.shape != gt.shape:
            raise ShapeError(
                f"EvalPair: extents differ, {pred.shape} vs {gt.shape}"
            )
        if pred.min() < 0.0 or pred.max() > 1.0:
            raise ContractError("EvalPair: prediction values must lie in [0, 1]")
        if not np.isin(gt, (0.0, 1.0)).all():
            raise ContractError("EvalPair: ground truth must be strictly binary")
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "gt", gt)


@dataclass(frozen=True)
class MetricReport:
    """Adaptive F, S, adaptive E, MAE, plus 256-entry threshold curves."""

    f_beta: float
    s_alpha: float
    e_phi: float
    mae: float
    f_curve: np.ndarray
    e_curve: np.ndarray

    def __post_init__(self):
        if len(self.f_curve) != NUM_THRESHOLDS or len(self.e_curve) != NUM_THRESHOLDS:
            raise ContractError("MetricReport: curves must have 256 entries")


def mae(pair: EvalPair) -> float:
    """Mean absolute error between ground truth and prediction."""
    return float(np.abs(pair.gt - pair.pred).mean())


def adaptive_threshold(pred: np.ndarray) -> float:
    """Per-image binarization threshold: twice the mean saliency, clamped to 255."""
    pred = np.asarray(pred, dtype=np.float64)
    return min(2.0 * float(pred.mean()) * 255.0, 255.0)


def _binarize(pred: np.ndarray, tau: float) -> np.ndarray:
    return (pred * 255.0 >= tau).astype(np.float64)


def _f_from_counts(tp: float, n_pred: float, n_gt: float) -> float:
    precision = tp / n_pred if n_pred > 0 else 0.0
    recall = tp / n_gt if n_gt > 0 else 0.0
    denom = _BETA_SQ * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + _BETA_SQ) * precision * recall / denom


def f_measure(pair: EvalPair, tau: float) -> float:
    """F-measure of the prediction binarized at ``tau`` on the [0, 255] scale."""
    fmap = _binarize(pair.pred, tau)
    tp = float((fmap * pair.gt).sum())
    return _f_from_counts(tp, float(fmap.sum()), float(pair.gt.sum()))


def _alignment_phi(pmap: np.ndarray, gt: np.ndarray) -> np.ndarray:
    xi_g = gt - gt.mean()
    xi_p = pmap - pmap.mean()
    align = 2.0 * xi_g * xi_p / (xi_g * xi_g + xi_p * xi_p + _EPS)
    return (align + 1.0) ** 2 / 4.0


def e_measure(pair: EvalPair, tau: float | None) -> float:
    """Enhanced-alignment measure.

    ``tau`` binarizes the prediction on the [0, 255] scale before alignment;
    ``None`` selects the soft (unthresholded) variant used by the training
    loss.
    """
    pmap = pair.pred if tau is None else _binarize(pair.pred, tau)
    gt_mean = pair.gt.mean()
    if gt_mean == 0.0:
        return float(1.0 - pmap.mean())
    if gt_mean == 1.0:
        return float(pmap.mean())
    return float(_alignment_phi(pmap, pair.gt).mean())


def _sample_std(values: np.ndarray) -> float:
    if values.size <= 1:
        return 0.0
    return float(values.std(ddof=1))


def _object_score(values: np.ndarray) -> float:
    x = float(values.mean())
    return 2.0 * x / (x * x + 1.0 + _sample_std(values) + _EPS)


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    fg = gt == 1.0
    u = float(gt.mean())
    return u * _object_score(pred[fg]) + (1.0 - u) * _object_score(1.0 - pred[~fg])


def _ssim_like(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    x = float(pred.mean())
    y = float(gt.mean())
    if n > 1:
        sig_x = float(((pred - x) ** 2).sum()) / (n - 1)
        sig_y = float(((gt - y) ** 2).sum()) / (n - 1)
        sig_xy = float(((pred - x) * (gt - y)).sum()) / (n - 1)
    else:
        sig_x = sig_y = sig_xy = 0.0
    alpha = 4.0 * x * y * sig_xy
    beta = (x * x + y * y) * (sig_x + sig_y)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    if beta == 0.0:
        return 1.0
    return 0.0


def _centroid_cuts(gt: np.ndarray) -> tuple[int, int]:
    # Half-up rounding of the foreground centroid; the centroid row/column
    # belongs to the top/left blocks.
    rows, cols = np.nonzero(gt)
    r_cut = int(math.floor(float(rows.mean()) + 0.5)) + 1
    c_cut = int(math.floor(float(cols.mean()) + 0.5)) + 1
    return r_cut, c_cut


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    r_cut, c_cut = _centroid_cuts(gt)
    area = h * w
    total = 0.0
    for rs, cs in ((slice(0, r_cut), slice(0, c_cut)),
                   (slice(0, r_cut), slice(c_cut, w)),
                   (slice(r_cut, h), slice(0, c_cut)),
                   (slice(r_cut, h), slice(c_cut, w))):
        block_gt = gt[rs, cs]
        weight = block_gt.size / area
        if weight == 0.0:
            continue
        total += weight * _ssim_like(pred[rs, cs], block_gt)
    return total


def s_measure(pair: EvalPair) -> float:
    """Structure measure: equal-weight blend of object- and region-level similarity."""
    gt_mean = float(pair.gt.mean())
    if gt_mean == 0.0:
        return float(1.0 - pair.pred.mean())
    if gt_mean == 1.0:
        return float(pair.pred.mean())
    score = _ALPHA * _s_object(pair.pred, pair.gt) + (1.0 - _ALPHA) * _s_region(
        pair.pred, pair.gt
    )
    return min(max(score, 0.0), 1.0)


def _curves(pair: EvalPair) -> tuple[np.ndarray, np.ndarray]:
    """F and E values at every integer threshold in [0, 255].

    For an integer threshold, ``pred*255 >= tau`` depends only on
    ``floor(pred*255)``, so one histogram yields the confusion counts at all
    256 thresholds, and the binary-map alignment reduces to a closed form on
    those counts.
    """
    levels = np.minimum(np.floor(pair.pred * 255.0), 255.0).astype(np.intp)
    fg = pair.gt == 1.0
    hist_all = np.bincount(levels.ravel(), minlength=NUM_THRESHOLDS).astype(np.float64)
    hist_fg = np.bincount(levels[fg], minlength=NUM_THRESHOLDS).astype(np.float64)
    # Counts of pixels with level >= tau.
    n_pred = np.cumsum(hist_all[::-1])[::-1]
    tp = np.cumsum(hist_fg[::-1])[::-1]
    n = pair.gt.size
    n_gt = float(pair.gt.sum())

    precision = np.divide(tp, n_pred, out=np.zeros_like(tp), where=n_pred > 0)
    recall = tp / n_gt if n_gt > 0 else np.zeros_like(tp)
    denom = _BETA_SQ * precision + recall
    f_curve = np.divide(
        (1.0 + _BETA_SQ) * precision * recall,
        denom,
        out=np.zeros_like(denom),
        where=denom > 0,
    )

    gt_mean = n_gt / n
    if gt_mean == 0.0:
        e_curve = 1.0 - n_pred / n
    elif gt_mean == 1.0:
        e_curve = n_pred / n
    else:
        fp = n_pred - tp
        fn = n_gt - tp
        tn = n - n_pred - fn
        mean_f = n_pred / n
        xg_pos, xg_neg = 1.0 - gt_mean, -gt_mean
        xf_pos, xf_neg = 1.0 - mean_f, -mean_f

        def phi(xg, xf):
            a = 2.0 * xg * xf / (xg * xg + xf * xf + _EPS)
            return (a + 1.0) ** 2 / 4.0

        e_curve = (
            tp * phi(xg_pos, xf_pos)
            + fp * phi(xg_neg, xf_pos)
            + fn * phi(xg_pos, xf_neg)
            + tn * phi(xg_neg, xf_neg)
        ) / n
    return f_curve, e_curve


def single_report(pair: EvalPair) -> MetricReport:
    """All metrics and both threshold curves for one pair."""
    tau = adaptive_threshold(pair.pred)
    f_curve, e_curve = _curves(pair)
    return MetricReport(
        f_beta=f_measure(pair, tau),
        s_alpha=s_measure(pair),
        e_phi=e_measure(pair, tau),
        mae=mae(pair),
        f_curve=f_curve,
        e_curve=e_curve,
    )


def evaluate_per_image(pairs: list[EvalPair], workers: int = 1) -> list[MetricReport]:
    """Per-image reports, computed in input order (optionally fanned out over threads)."""
    if not pairs:
        raise ContractError("evaluate: empty pair list")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(single_report, pairs))
    return [single_report(p) for p in pairs]


def aggregate(reports: list[MetricReport]) -> MetricReport:
    """Dataset report: the arithmetic mean of per-image metrics and curves.

    Exact summation keeps the result independent of reduction order.
    """
    if not reports:
        raise ContractError("aggregate: empty report list")
    n = len(reports)

    def fmean(values):
        return math.fsum(values) / n

    f_curve = np.array(
        [fmean(r.f_curve[t] for r in reports) for t in range(NUM_THRESHOLDS)]
    )
    e_curve = np.array(
        [fmean(r.e_curve[t] for r in reports) for t in range(NUM_THRESHOLDS)]
    )
    return MetricReport(
        f_beta=fmean(r.f_beta for r in reports),
        s_alpha=fmean(r.s_alpha for r in reports),
        e_phi=fmean(r.e_phi for r in reports),
        mae=fmean(r.mae for r in reports),
        f_curve=f_curve,
        e_curve=e_curve,
    )


def evaluate(pairs: list[EvalPair], workers: int = 1) -> MetricReport:
    """Dataset-level metrics: per-image metrics averaged over the set."""
    return aggregate(evaluate_per_image(pairs, workers=workers))
