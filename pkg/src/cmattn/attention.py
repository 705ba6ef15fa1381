"""Mutual attention between an all-in-focus branch and a depth branch.

The mechanism at one decoding stage: a position-by-position similarity matrix
between the two branches, column/row softmax normalization into a pair of
attention matrices, redistribution of fused branch features through those
matrices, and a learned sigmoid gate on each branch.  Two such modules are
chained into a cascade, the second consuming the first's gated outputs.

Forward evaluation is pure; pass a tape to make every step differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor_ops as T
from .tensor_ops import ShapeError, Tape, Tensor

__all__ = [
    "AttentionOutput",
    "AttentionParams",
    "DualFeatures",
    "cma_forward",
    "fuse",
    "multi_level_concat",
    "mutual_attention",
    "normalize_mutual",
    "similarity",
]


@dataclass(frozen=True)
class DualFeatures:
    """Paired branch features at one decoding stage, identical H x W x C shapes."""

    aif: Tensor
    dep: Tensor
    stage: int

    def __post_init__(self):
        if self.aif.rank != 3 or self.dep.rank != 3:
            raise ShapeError("DualFeatures: branch features must be rank 3")
        if self.aif.shape != self.dep.shape:
            raise ShapeError(
                f"DualFeatures: branch shapes differ, {self.aif.shape} vs {self.dep.shape}"
            )

    @property
    def channels(self) -> int:
        return self.aif.shape[2]


@dataclass(frozen=True)
class AttentionParams:
    """Learnable weights of one mutual attention module.

    Gate kernels are kh x kw x C x C with odd extents (applied with same
    padding); the fusion kernel is 1 x 1 x 2C x C.  Gate convolutions carry a
    per-channel bias.
    """

    gate_kernel_aif: Tensor
    gate_kernel_dep: Tensor
    fuse_kernel: Tensor
    gate_bias_aif: Tensor
    gate_bias_dep: Tensor

    def __post_init__(self):
        c = self.fuse_kernel.shape[3]
        if self.fuse_kernel.shape[2] != 2 * c:
            raise ShapeError(
                f"AttentionParams: fuse kernel must map 2C -> C, got {self.fuse_kernel.shape}"
            )
        for name in ("gate_kernel_aif", "gate_kernel_dep"):
            k = getattr(self, name)
            if k.shape[2] != c or k.shape[3] != c:
                raise ShapeError(f"AttentionParams: {name} must be C -> C with C={c}")
            if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
                raise ShapeError(f"AttentionParams: {name} extents must be odd")
        for name in ("gate_bias_aif", "gate_bias_dep"):
            if getattr(self, name).shape != (c,):
                raise ShapeError(f"AttentionParams: {name} must have shape ({c},)")

    @property
    def channels(self) -> int:
        return self.fuse_kernel.shape[3]


@dataclass(frozen=True)
class AttentionOutput:
    """Everything one mutual attention module computes.

    ``sim`` is the raw HW x HW similarity matrix, ``att_*`` its column- and
    row-normalized forms (every column sums to one), ``f_sim_*`` the
    redistributed fused features, ``gate_*`` the sigmoid gates, and ``ma_*``
    the gated outputs that feed the rest of the decoder.
    """

    ma_aif: Tensor
    ma_dep: Tensor
    sim: Tensor
    att_aif: Tensor
    att_dep: Tensor
    f_sim_aif: Tensor
    f_sim_dep: Tensor
    gate_aif: Tensor
    gate_dep: Tensor
    fused: Tensor


def multi_level_concat(
    f_lo: Tensor, f_hi: Tensor, proj: Tensor, tape: Tape | None = None
) -> Tensor:
    """Merge adjacent-stage features: upsample the deeper map, concat, 1x1 project, relu."""
    if f_lo.rank != 3 or f_hi.rank != 3:
        raise ShapeError("multi_level_concat: features must be rank 3")
    h, w = f_lo.shape[:2]
    if f_hi.shape[0] > h or f_hi.shape[1] > w:
        raise ShapeError(
            f"multi_level_concat: deeper stage {f_hi.shape} larger than {f_lo.shape}"
        )
    if proj.rank != 4 or proj.shape[:2] != (1, 1):
        raise ShapeError(f"multi_level_concat: projection must be 1x1, got {proj.shape}")
    if proj.shape[2] != f_lo.shape[2] + f_hi.shape[2]:
        raise ShapeError(
            f"multi_level_concat: projection expects {proj.shape[2]} channels, "
            f"inputs provide {f_lo.shape[2] + f_hi.shape[2]}"
        )
    if f_hi.shape[:2] != (h, w):
        f_hi = T.upsample_bilinear(f_hi, h, w, tape=tape)
    merged = T.concat_channels(f_lo, f_hi, tape=tape)
    return T.relu(T.conv2d(merged, proj, tape=tape), tape=tape)


def similarity(dual: DualFeatures, tape: Tape | None = None) -> Tensor:
    """HW x HW similarity: entry (p, q) is the channel dot product of depth
    position p with all-in-focus position q."""
    f_aif = T.flatten(dual.aif, tape=tape)
    f_dep = T.flatten(dual.dep, tape=tape)
    return T.matmul(T.transpose2d(f_dep, tape=tape), f_aif, tape=tape)


def normalize_mutual(sim: Tensor, tape: Tape | None = None) -> tuple[Tensor, Tensor]:
    """Column-normalize the similarity matrix and its transpose.

    Both returned attention matrices are column-stochastic: the all-in-focus
    attention normalizes the columns of ``sim``, the depth attention the
    columns of ``sim`` transposed (i.e. the rows of ``sim``).
    """
    if sim.rank != 2 or sim.shape[0] != sim.shape[1]:
        raise ShapeError(f"normalize_mutual: similarity must be square, got {sim.shape}")
    att_aif = T.softmax_columns(sim, tape=tape)
    att_dep = T.softmax_columns(T.transpose2d(sim, tape=tape), tape=tape)
    return att_aif, att_dep


def fuse(dual: DualFeatures, fuse_kernel: Tensor, tape: Tape | None = None) -> Tensor:
    """Fused branch features: channel concat followed by a learned 1x1 projection and relu."""
    merged = T.concat_channels(dual.aif, dual.dep, tape=tape)
    return T.relu(T.conv2d(merged, fuse_kernel, tape=tape), tape=tape)


def _redistribute(fused_flat: Tensor, att: Tensor, h: int, w: int, tape: Tape | None) -> Tensor:
    # Each output position is a convex combination of fused-feature positions:
    # columns of the attention matrix carry the (unit-sum) weights.
    return T.reshape3d(T.matmul(fused_flat, att, tape=tape), h, w, tape=tape)


def mutual_attention(
    dual: DualFeatures, params: AttentionParams, tape: Tape | None = None
) -> AttentionOutput:
    """One mutual attention module: similarity, normalization, redistribution, gating."""
    if dual.channels != params.channels:
        raise ShapeError(
            f"mutual_attention: features carry {dual.channels} channels, "
            f"params expect {params.channels}"
        )
    h, w, _ = dual.aif.shape
    sim = similarity(dual, tape=tape)
    att_aif, att_dep = normalize_mutual(sim, tape=tape)
    fused = fuse(dual, params.fuse_kernel, tape=tape)
    fused_flat = T.flatten(fused, tape=tape)
    f_sim_aif = _redistribute(fused_flat, att_aif, h, w, tape)
    f_sim_dep = _redistribute(fused_flat, att_dep, h, w, tape)

    def gated(f_sim: Tensor, kernel: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
        pad = kernel.shape[0] // 2
        z = T.conv2d(f_sim, kernel, padding=pad, tape=tape)
        gate = T.sigmoid(T.add_channel_bias(z, bias, tape=tape), tape=tape)
        return gate, T.hadamard(gate, f_sim, tape=tape)

    gate_aif, ma_aif = gated(f_sim_aif, params.gate_kernel_aif, params.gate_bias_aif)
    gate_dep, ma_dep = gated(f_sim_dep, params.gate_kernel_dep, params.gate_bias_dep)
    return AttentionOutput(
        ma_aif=ma_aif,
        ma_dep=ma_dep,
        sim=sim,
        att_aif=att_aif,
        att_dep=att_dep,
        f_sim_aif=f_sim_aif,
        f_sim_dep=f_sim_dep,
        gate_aif=gate_aif,
        gate_dep=gate_dep,
        fused=fused,
    )


def cma_forward(
    stage2: DualFeatures,
    stage3plus4: DualFeatures,
    params2: AttentionParams,
    params3: AttentionParams,
    merge_proj_aif: Tensor,
    merge_proj_dep: Tensor,
    tape: Tape | None = None,
) -> tuple[AttentionOutput, AttentionOutput]:
    """Cascade of two mutual attention modules.

    The first module consumes the stage-2 merged features.  Its gated outputs
    are merged per branch with the stage-3/4 features (``merge_proj_*`` are the
    1x1 projections of that merge) and feed the second module.  Both module
    outputs are returned so each can be supervised.
    """
    out2 = mutual_attention(stage2, params2, tape=tape)
    merged = DualFeatures(
        aif=multi_level_concat(out2.ma_aif, stage3plus4.aif, merge_proj_aif, tape=tape),
        dep=multi_level_concat(out2.ma_dep, stage3plus4.dep, merge_proj_dep, tape=tape),
        stage=3,
    )
    out3 = mutual_attention(merged, params3, tape=tape)
    return out2, out3
