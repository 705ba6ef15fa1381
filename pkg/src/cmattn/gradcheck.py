"""Finite-difference verification of every differentiable primitive.

Each check builds seeded random inputs, evaluates the analytic gradient
through a tape, and compares against central finite differences of the
forward computation.  The checks cover the full backward registry plus the
composites that matter: the attention module, the two-module cascade, the
three losses, and the encoder.  Coarse composites compare a directional
derivative plus a sample of coordinates so the suite stays fast.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor_ops as T
from .attention import AttentionParams, DualFeatures, cma_forward, mutual_attention
from .losses import GroundTruth, bce_loss, em_loss, iou_loss
from .tensor_ops import Tape, Tensor

__all__ = [
    "CheckResult",
    "all_check_names",
    "corrupted_backward",
    "finite_difference",
    "relative_error",
    "run_suite",
]

FD_STEP = 1e-5
PRIMITIVE_TOL = 1e-5
COMPOSITE_TOL = 1e-4
# Ops whose spec examples demand a tighter bound.
_TIGHT = {"matmul": 1e-6, "softmax_columns": 1e-6}


def finite_difference(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + step
        fp = f(x)
        x.flat[i] = orig - step
        fm = f(x)
        x.flat[i] = orig
        g.flat[i] = (fp - fm) / (2.0 * step)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 0.0
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / max(na, nb)


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst < self.tol


def _weighted_sum(out: Tensor, w: np.ndarray) -> float:
    return float((out.data * w).sum())


def _check_full(builder, seed: int) -> float:
    """Exhaustive FD over every coordinate of every input."""
    rng = np.random.default_rng(seed)
    forward, inputs = builder(rng)
    tape = Tape()
    out = forward([Tensor(a) for a in inputs], tape)
    w = rng.normal(size=out.shape)
    wrapped = [Tensor(a) for a in inputs]
    tape = Tape()
    out = forward(wrapped, tape)
    grads = tape.backward(out, seed=w)
    worst = 0.0
    for pos, arr in enumerate(inputs):
        analytic = grads.get(wrapped[pos])
        if analytic is None:
            analytic = np.zeros_like(arr)

        def scalar(a, pos=pos):
            probe = list(inputs)
            probe[pos] = a
            return _weighted_sum(forward([Tensor(v) for v in probe], None), w)

        numeric = finite_difference(scalar, arr)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def _check_sampled(builder, seed: int, n_coords: int = 24) -> float:
    """Directional derivative per input plus a vector of sampled FD coordinates.

    Sampled coordinates are compared as one vector so near-zero entries do not
    blow up an otherwise exact gradient.
    """
    rng = np.random.default_rng(seed)
    forward, inputs = builder(rng)
    wrapped = [Tensor(a) for a in inputs]
    tape = Tape()
    out = forward(wrapped, tape)
    w = rng.normal(size=out.shape)
    grads = tape.backward(out, seed=w)
    worst = 0.0

    def scalar_at(pos, a):
        probe = list(inputs)
        probe[pos] = a
        return _weighted_sum(forward([Tensor(v) for v in probe], None), w)

    for pos, arr in enumerate(inputs):
        analytic = grads.get(wrapped[pos])
        if analytic is None:
            analytic = np.zeros_like(arr)
        direction = rng.normal(size=arr.shape)
        direction /= np.linalg.norm(direction)
        fp = scalar_at(pos, arr + FD_STEP * direction)
        fm = scalar_at(pos, arr - FD_STEP * direction)
        numeric_dir = (fp - fm) / (2.0 * FD_STEP)
        analytic_dir = float((analytic * direction).sum())
        worst = max(
            worst,
            abs(analytic_dir - numeric_dir)
            / max(abs(analytic_dir), abs(numeric_dir), 1e-8),
        )
    total = sum(a.size for a in inputs)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    bounds = np.cumsum([a.size for a in inputs])
    analytic_sample = []
    numeric_sample = []
    for flat in sorted(int(i) for i in picks):
        pos = int(np.searchsorted(bounds, flat, side="right"))
        local = flat - (0 if pos == 0 else int(bounds[pos - 1]))
        arr = inputs[pos]
        probe = arr.copy()
        orig = probe.flat[local]
        probe.flat[local] = orig + FD_STEP
        fp = scalar_at(pos, probe)
        probe.flat[local] = orig - FD_STEP
        fm = scalar_at(pos, probe)
        numeric_sample.append((fp - fm) / (2.0 * FD_STEP))
        analytic = grads.get(wrapped[pos])
        analytic_sample.append(0.0 if analytic is None else float(analytic.flat[local]))
    worst = max(worst, relative_error(np.array(analytic_sample), np.array(numeric_sample)))
    return worst


# --- input builders ---------------------------------------------------------
# Each builder returns (forward, raw input arrays); forward takes wrapped
# tensors and an optional tape, and must route every op through that tape.


def _away_from(rng, shape, margin=0.1):
    # Samples with |x| >= margin so relu/clip kinks stay clear of FD probes.
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x) * margin + x, x)


def _b_flatten(rng):
    return (lambda xs, tape: T.flatten(xs[0], tape=tape), [rng.normal(size=(3, 4, 2))])


def _b_reshape3d(rng):
    return (lambda xs, tape: T.reshape3d(xs[0], 3, 4, tape=tape), [rng.normal(size=(2, 12))])


def _b_transpose2d(rng):
    return (lambda xs, tape: T.transpose2d(xs[0], tape=tape), [rng.normal(size=(3, 5))])


def _b_drop_channel(rng):
    return (lambda xs, tape: T.drop_channel(xs[0], tape=tape), [rng.normal(size=(4, 5, 1))])


def _b_matmul(rng):
    return (
        lambda xs, tape: T.matmul(xs[0], xs[1], tape=tape),
        [rng.normal(size=(4, 5)), rng.normal(size=(5, 3))],
    )


def _b_softmax(rng):
    return (lambda xs, tape: T.softmax_columns(xs[0], tape=tape), [rng.normal(size=(6, 4))])


def _b_add(rng):
    return (
        lambda xs, tape: T.add(xs[0], xs[1], tape=tape),
        [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))],
    )


def _b_sub(rng):
    return (
        lambda xs, tape: T.sub(xs[0], xs[1], tape=tape),
        [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))],
    )


def _b_hadamard(rng):
    return (
        lambda xs, tape: T.hadamard(xs[0], xs[1], tape=tape),
        [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))],
    )


def _b_divide(rng):
    return (
        lambda xs, tape: T.divide(xs[0], xs[1], tape=tape),
        [rng.normal(size=(3, 4)), _away_from(rng, (3, 4), margin=0.5)],
    )


def _b_neg(rng):
    return (lambda xs, tape: T.neg(xs[0], tape=tape), [rng.normal(size=(3, 4))])


def _b_add_scalar(rng):
    return (lambda xs, tape: T.add_scalar(xs[0], 1.7, tape=tape), [rng.normal(size=(3, 4))])


def _b_mul_scalar(rng):
    return (lambda xs, tape: T.mul_scalar(xs[0], -2.3, tape=tape), [rng.normal(size=(3, 4))])


def _b_sigmoid(rng):
    return (lambda xs, tape: T.sigmoid(xs[0], tape=tape), [rng.normal(size=(4, 4))])


def _b_relu(rng):
    return (lambda xs, tape: T.relu(xs[0], tape=tape), [_away_from(rng, (4, 4))])


def _b_log(rng):
    return (lambda xs, tape: T.log(xs[0], tape=tape), [rng.uniform(0.2, 2.0, size=(3, 4))])


def _b_clip(rng):
    return (
        lambda xs, tape: T.clip(xs[0], -1.0, 1.0, tape=tape),
        [_away_from(rng, (4, 4)) * 0.6],
    )


def _b_sum_all(rng):
    return (lambda xs, tape: T.sum_all(xs[0], tape=tape), [rng.normal(size=(3, 4))])


def _b_mean_all(rng):
    return (lambda xs, tape: T.mean_all(xs[0], tape=tape), [rng.normal(size=(3, 4))])


def _b_expand_scalar(rng):
    return (
        lambda xs, tape: T.expand_scalar(xs[0], (3, 4), tape=tape),
        [np.asarray(rng.normal())],
    )


def _b_concat(rng):
    return (
        lambda xs, tape: T.concat_channels(xs[0], xs[1], tape=tape),
        [rng.normal(size=(3, 4, 2)), rng.normal(size=(3, 4, 3))],
    )


def _b_bias(rng):
    return (
        lambda xs, tape: T.add_channel_bias(xs[0], xs[1], tape=tape),
        [rng.normal(size=(3, 4, 2)), rng.normal(size=(2,))],
    )


def _b_conv(rng):
    return (
        lambda xs, tape: T.conv2d(xs[0], xs[1], stride=1, padding=1, tape=tape),
        [rng.normal(size=(5, 5, 2)), rng.normal(size=(3, 3, 2, 2))],
    )


def _b_conv_strided(rng):
    return (
        lambda xs, tape: T.conv2d(xs[0], xs[1], stride=2, padding=2, dilation=2, tape=tape),
        [rng.normal(size=(6, 6, 2)), rng.normal(size=(3, 3, 2, 2))],
    )


def _b_deconv(rng):
    return (
        lambda xs, tape: T.deconv2d(xs[0], xs[1], stride=2, padding=1, tape=tape),
        [rng.normal(size=(3, 3, 2)), rng.normal(size=(3, 3, 2, 2))],
    )


def _b_upsample(rng):
    return (
        lambda xs, tape: T.upsample_bilinear(xs[0], 6, 7, tape=tape),
        [rng.normal(size=(3, 4, 2))],
    )


def _attention_forward(xs, tape, gate_kernel=3):
    aif, dep, g_a, g_d, fk, b_a, b_d = xs
    dual = DualFeatures(aif, dep, stage=2)
    params = AttentionParams(
        gate_kernel_aif=g_a, gate_kernel_dep=g_d, fuse_kernel=fk,
        gate_bias_aif=b_a, gate_bias_dep=b_d,
    )
    out = mutual_attention(dual, params, tape=tape)
    return T.add(out.ma_aif, out.ma_dep, tape=tape)


def _b_mutual_attention(rng):
    c = 3
    return (
        _attention_forward,
        [
            rng.normal(size=(3, 3, c)),
            rng.normal(size=(3, 3, c)),
            rng.normal(size=(3, 3, c, c)) * 0.5,
            rng.normal(size=(3, 3, c, c)) * 0.5,
            rng.normal(size=(1, 1, 2 * c, c)) * 0.5,
            rng.normal(size=(c,)) * 0.1,
            rng.normal(size=(c,)) * 0.1,
        ],
    )


def _cascade_forward(xs, tape):
    a2, d2, a3, d3, ga2, gd2, f2, ba2, bd2, ga3, gd3, f3, ba3, bd3, mp_a, mp_d = xs
    p2 = AttentionParams(ga2, gd2, f2, ba2, bd2)
    p3 = AttentionParams(ga3, gd3, f3, ba3, bd3)
    out2, out3 = cma_forward(
        DualFeatures(a2, d2, stage=2), DualFeatures(a3, d3, stage=3),
        p2, p3, mp_a, mp_d, tape=tape,
    )
    lo = T.sum_all(T.hadamard(out2.ma_aif, out2.ma_dep, tape=tape), tape=tape)
    hi = T.sum_all(T.hadamard(out3.ma_aif, out3.ma_dep, tape=tape), tape=tape)
    return T.add(lo, hi, tape=tape)


def _b_cma(rng):
    c2, c3 = 4, 4
    return (
        _cascade_forward,
        [
            rng.normal(size=(4, 4, c2)),
            rng.normal(size=(4, 4, c2)),
            rng.normal(size=(2, 2, c3)),
            rng.normal(size=(2, 2, c3)),
            rng.normal(size=(3, 3, c2, c2)) * 0.4,
            rng.normal(size=(3, 3, c2, c2)) * 0.4,
            rng.normal(size=(1, 1, 2 * c2, c2)) * 0.4,
            rng.normal(size=(c2,)) * 0.1,
            rng.normal(size=(c2,)) * 0.1,
            rng.normal(size=(3, 3, c3, c3)) * 0.4,
            rng.normal(size=(3, 3, c3, c3)) * 0.4,
            rng.normal(size=(1, 1, 2 * c3, c3)) * 0.4,
            rng.normal(size=(c3,)) * 0.1,
            rng.normal(size=(c3,)) * 0.1,
            rng.normal(size=(1, 1, c2 + c3, c3)) * 0.4,
            rng.normal(size=(1, 1, c2 + c3, c3)) * 0.4,
        ],
    )


def _loss_builder(loss_fn):
    def build(rng):
        gt_arr = (rng.random((6, 6)) < 0.4).astype(np.float64)
        if gt_arr.sum() in (0.0, gt_arr.size):
            gt_arr[0, 0] = 1.0
            gt_arr[-1, -1] = 0.0
        gt = GroundTruth(Tensor(gt_arr))
        p = rng.uniform(0.1, 0.9, size=(6, 6))
        return (lambda xs, tape: loss_fn(xs[0], gt, tape=tape), [p])

    return build


_FULL_CHECKS: dict[str, Callable] = {
    "flatten": _b_flatten,
    "reshape3d": _b_reshape3d,
    "transpose2d": _b_transpose2d,
    "drop_channel": _b_drop_channel,
    "matmul": _b_matmul,
    "softmax_columns": _b_softmax,
    "add": _b_add,
    "sub": _b_sub,
    "hadamard": _b_hadamard,
    "divide": _b_divide,
    "neg": _b_neg,
    "add_scalar": _b_add_scalar,
    "mul_scalar": _b_mul_scalar,
    "sigmoid": _b_sigmoid,
    "relu": _b_relu,
    "log": _b_log,
    "clip": _b_clip,
    "sum_all": _b_sum_all,
    "mean_all": _b_mean_all,
    "expand_scalar": _b_expand_scalar,
    "concat_channels": _b_concat,
    "add_channel_bias": _b_bias,
    "conv2d": _b_conv,
    "conv2d_strided_dilated": _b_conv_strided,
    "deconv2d": _b_deconv,
    "upsample_bilinear": _b_upsample,
    "mutual_attention": _b_mutual_attention,
    "bce_loss": _loss_builder(bce_loss),
    "iou_loss": _loss_builder(iou_loss),
    "em_loss": _loss_builder(em_loss),
}

_SAMPLED_CHECKS: dict[str, Callable] = {
    "cma_forward": _b_cma,
}

_COMPOSITES = {"mutual_attention", "cma_forward", "bce_loss", "iou_loss", "em_loss"}
_PRIMITIVE_FOR = {"conv2d_strided_dilated": "conv2d"}


def all_check_names() -> list[str]:
    return [*_FULL_CHECKS, *_SAMPLED_CHECKS]


def covered_ops() -> set[str]:
    """Backward-registry ops exercised by the suite (for coverage assertions)."""
    return {_PRIMITIVE_FOR.get(name, name) for name in _FULL_CHECKS}


def _tolerance(name: str) -> float:
    if name in _COMPOSITES:
        return COMPOSITE_TOL
    return _TIGHT.get(_PRIMITIVE_FOR.get(name, name), PRIMITIVE_TOL)


def run_suite(seeds: list[int] | None = None, names: list[str] | None = None) -> list[CheckResult]:
    """Run every check over the given seeds; worst relative error per check."""
    if seeds is None:
        seeds = list(range(20))
    results = []
    for name in names if names is not None else all_check_names():
        if name in _FULL_CHECKS:
            worst = max(_check_full(_FULL_CHECKS[name], s) for s in seeds)
        elif name in _SAMPLED_CHECKS:
            worst = max(_check_sampled(_SAMPLED_CHECKS[name], s) for s in seeds)
        else:
            raise KeyError(f"unknown gradient check {name!r}")
        results.append(CheckResult(name=name, worst=worst, tol=_tolerance(name)))
    return results


@contextmanager
def corrupted_backward(op: str, scale: float = 1.01):
    """Test hook: temporarily scales one op's backward rule by ``scale``."""
    original = T._BACKWARD[op]

    def corrupt(entry, g):
        return tuple(None if x is None else x * scale for x in original(entry, g))

    T._BACKWARD[op] = corrupt
    try:
        yield
    finally:
        T._BACKWARD[op] = original
