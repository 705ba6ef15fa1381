"""Parameters and forward pass of the toy network, for all ablation variants.

Parameter tensors live in a flat name -> Tensor dict so the optimizer, the
checkpoint format and gradient spot checks can treat them uniformly.
"""

from __future__ import annotations

import numpy as np

from .. import tensor_ops as T
from ..attention import AttentionParams, DualFeatures, cma_forward, multi_level_concat, mutual_attention
from ..losses import Prediction
from ..tensor_ops import Tape, Tensor
from .config import ToyConfig, variant_flags
from .data import SyntheticSample

__all__ = [
    "decode",
    "encode",
    "init_params",
    "model_forward",
    "parameter_count",
    "rfb_lite",
]

_RFB_DILATIONS = (1, 2, 3)
_STAGES = ("s2", "s3", "s4")


def _he(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    fan_in = int(np.prod(shape[:3])) if len(shape) == 4 else int(np.prod(shape))
    return Tensor._wrap(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape))


def _zeros(shape) -> Tensor:
    return Tensor.zeros(shape)


def _head_channels(variant: str, config: ToyConfig) -> tuple[int, int, int]:
    dual, _, _ = variant_flags(variant)
    c2, c3, _ = config.channels
    mult = 2 if dual else 1
    return mult * c2, mult * c3, c2  # head1 in, head2/deconv in, decoder width


def init_params(
    variant: str, config: ToyConfig, rng: np.random.Generator
) -> dict[str, Tensor]:
    """He-initialized kernels and zero biases for one variant."""
    dual, ma1, ma2 = variant_flags(variant)
    c2, c3, c4 = config.channels
    widths = {"s2": (3, c2), "s3": (c2, c3), "s4": (c3, c4)}
    params: dict[str, Tensor] = {}

    for branch in ("aif", "dep") if dual else ("aif",):
        for stage in _STAGES:
            cin, cout = widths[stage]
            params[f"enc.{branch}.{stage}.w"] = _he(rng, (3, 3, cin, cout))
            params[f"enc.{branch}.{stage}.b"] = _zeros(cout)
        for stage in _STAGES:
            c = widths[stage][1]
            for d in _RFB_DILATIONS:
                params[f"rfb.{branch}.{stage}.d{d}.w"] = _he(rng, (3, 3, c, c))
            params[f"rfb.{branch}.{stage}.b"] = _zeros(c)
        params[f"con.{branch}.i2.w"] = _he(rng, (1, 1, c2 + c3, c2))
        params[f"con.{branch}.i3.w"] = _he(rng, (1, 1, c3 + c4, c3))
        params[f"cas.{branch}.w"] = _he(rng, (1, 1, c2 + c3, c3))

    for present, stage, c in ((ma1, "i2", c2), (ma2, "i3", c3)):
        if not present:
            continue
        for gate in ("gate_aif", "gate_dep"):
            params[f"attn.{stage}.{gate}.w"] = _he(rng, (3, 3, c, c))
            params[f"attn.{stage}.{gate}.b"] = _zeros(c)
        params[f"attn.{stage}.fuse.w"] = _he(rng, (1, 1, 2 * c, c))

    h1_in, h2_in, dec = _head_channels(variant, config)
    params["head.h1.w"] = _he(rng, (1, 1, h1_in, 1))
    params["head.h1.b"] = _zeros(1)
    params["head.h2.w"] = _he(rng, (1, 1, h2_in, 1))
    params["head.h2.b"] = _zeros(1)
    params["dec.up.w"] = _he(rng, (2, 2, dec, h2_in))
    params["dec.up.b"] = _zeros(dec)
    params["dec.conv.w"] = _he(rng, (3, 3, dec, dec))
    params["dec.conv.b"] = _zeros(dec)
    params["head.h3.w"] = _he(rng, (1, 1, dec, 1))
    params["head.h3.b"] = _zeros(1)
    return params


def parameter_count(params: dict[str, Tensor]) -> int:
    return sum(p.size for p in params.values())


def _attention_params(params: dict[str, Tensor], stage: str) -> AttentionParams:
    return AttentionParams(
        gate_kernel_aif=params[f"attn.{stage}.gate_aif.w"],
        gate_kernel_dep=params[f"attn.{stage}.gate_dep.w"],
        fuse_kernel=params[f"attn.{stage}.fuse.w"],
        gate_bias_aif=params[f"attn.{stage}.gate_aif.b"],
        gate_bias_dep=params[f"attn.{stage}.gate_dep.b"],
    )


def _conv_block(
    x: Tensor, w: Tensor, b: Tensor, stride: int, padding: int, tape: Tape | None
) -> Tensor:
    z = T.conv2d(x, w, stride=stride, padding=padding, tape=tape)
    return T.relu(T.add_channel_bias(z, b, tape=tape), tape=tape)


def _encode_branch(
    x: Tensor, params: dict[str, Tensor], branch: str, tape: Tape | None
) -> list[Tensor]:
    feats = []
    for stage in _STAGES:
        x = _conv_block(
            x, params[f"enc.{branch}.{stage}.w"], params[f"enc.{branch}.{stage}.b"],
            stride=2, padding=1, tape=tape,
        )
        feats.append(x)
    return feats


def encode(
    sample: SyntheticSample,
    params: dict[str, Tensor],
    variant: str,
    tape: Tape | None = None,
) -> tuple[list[Tensor], list[Tensor] | None]:
    """Three stride-2 stages per branch; the depth map is replicated to 3 channels."""
    dual, _, _ = variant_flags(variant)
    aif_stages = _encode_branch(sample.aif, params, "aif", tape)
    if not dual:
        return aif_stages, None
    dep_in = Tensor._wrap(np.repeat(sample.depth.data, 3, axis=2))
    return aif_stages, _encode_branch(dep_in, params, "dep", tape)


def rfb_lite(
    f: Tensor,
    kernels: list[Tensor],
    bias: Tensor,
    dilations: tuple[int, ...] = _RFB_DILATIONS,
    tape: Tape | None = None,
) -> Tensor:
    """Sum of parallel 3x3 convolutions at increasing dilation, then bias and relu."""
    acc: Tensor | None = None
    for d, k in zip(dilations, kernels):
        y = T.conv2d(f, k, stride=1, padding=d, dilation=d, tape=tape)
        acc = y if acc is None else T.add(acc, y, tape=tape)
    assert acc is not None
    return T.relu(T.add_channel_bias(acc, bias, tape=tape), tape=tape)


def _rfb_branch(
    stages: list[Tensor], params: dict[str, Tensor], branch: str, tape: Tape | None
) -> list[Tensor]:
    out = []
    for stage, f in zip(_STAGES, stages):
        kernels = [params[f"rfb.{branch}.{stage}.d{d}.w"] for d in _RFB_DILATIONS]
        out.append(rfb_lite(f, kernels, params[f"rfb.{branch}.{stage}.b"], tape=tape))
    return out


def _head(
    x: Tensor, w: Tensor, b: Tensor, out_hw: tuple[int, int], tape: Tape | None
) -> Tensor:
    z = T.add_channel_bias(T.conv2d(x, w, tape=tape), b, tape=tape)
    if z.shape[:2] != out_hw:
        z = T.upsample_bilinear(z, out_hw[0], out_hw[1], tape=tape)
    return T.drop_channel(T.sigmoid(z, tape=tape), tape=tape)


def decode(
    stage2_feat: Tensor,
    stage3_feat: Tensor,
    params: dict[str, Tensor],
    out_hw: tuple[int, int],
    tape: Tape | None = None,
) -> Prediction:
    """Three supervision heads: one per decoding stage plus one after the
    transposed-convolution stack."""
    h1 = _head(stage2_feat, params["head.h1.w"], params["head.h1.b"], out_hw, tape)
    h2 = _head(stage3_feat, params["head.h2.w"], params["head.h2.b"], out_hw, tape)
    up = T.deconv2d(stage3_feat, params["dec.up.w"], stride=2, tape=tape)
    up = T.relu(T.add_channel_bias(up, params["dec.up.b"], tape=tape), tape=tape)
    up = _conv_block(up, params["dec.conv.w"], params["dec.conv.b"], 1, 1, tape)
    h3 = _head(up, params["head.h3.w"], params["head.h3.b"], out_hw, tape)
    return Prediction((h1, h2, h3))


def model_forward(
    params: dict[str, Tensor],
    sample: SyntheticSample,
    variant: str,
    config: ToyConfig,
    tape: Tape | None = None,
) -> tuple[Prediction, dict]:
    """Full forward pass; returns the three maps plus named intermediates."""
    dual, ma1, ma2 = variant_flags(variant)
    out_hw = sample.gt.shape
    aif_stages, dep_stages = encode(sample, params, variant, tape)
    rfb_aif = _rfb_branch(aif_stages, params, "aif", tape)

    def mlc(branch_feats, branch, key):
        lo, hi = branch_feats
        return multi_level_concat(lo, hi, params[key], tape=tape)

    f2_aif = mlc(rfb_aif[0:2], "aif", "con.aif.i2.w")
    f3_aif = mlc(rfb_aif[1:3], "aif", "con.aif.i3.w")

    inter: dict = {}
    if not dual:
        s3_aif = multi_level_concat(f2_aif, f3_aif, params["cas.aif.w"], tape=tape)
        return decode(f2_aif, s3_aif, params, out_hw, tape), inter

    rfb_dep = _rfb_branch(dep_stages, params, "dep", tape)
    f2_dep = mlc(rfb_dep[0:2], "dep", "con.dep.i2.w")
    f3_dep = mlc(rfb_dep[1:3], "dep", "con.dep.i3.w")
    stage2 = DualFeatures(f2_aif, f2_dep, stage=2)
    stage3 = DualFeatures(f3_aif, f3_dep, stage=3)

    if ma1 and ma2:
        out2, out3 = cma_forward(
            stage2, stage3,
            _attention_params(params, "i2"), _attention_params(params, "i3"),
            params["cas.aif.w"], params["cas.dep.w"], tape=tape,
        )
        inter["attn2"], inter["attn3"] = out2, out3
        s2_aif, s2_dep = out2.ma_aif, out2.ma_dep
        s3_aif, s3_dep = out3.ma_aif, out3.ma_dep
    else:
        if ma1:
            out2 = mutual_attention(stage2, _attention_params(params, "i2"), tape=tape)
            inter["attn2"] = out2
            s2_aif, s2_dep = out2.ma_aif, out2.ma_dep
        else:
            s2_aif, s2_dep = f2_aif, f2_dep
        merged = DualFeatures(
            multi_level_concat(s2_aif, f3_aif, params["cas.aif.w"], tape=tape),
            multi_level_concat(s2_dep, f3_dep, params["cas.dep.w"], tape=tape),
            stage=3,
        )
        if ma2:
            out3 = mutual_attention(merged, _attention_params(params, "i3"), tape=tape)
            inter["attn3"] = out3
            s3_aif, s3_dep = out3.ma_aif, out3.ma_dep
        else:
            s3_aif, s3_dep = merged.aif, merged.dep

    stage2_feat = T.concat_channels(s2_aif, s2_dep, tape=tape)
    stage3_feat = T.concat_channels(s3_aif, s3_dep, tape=tape)
    return decode(stage2_feat, stage3_feat, params, out_hw, tape), inter
