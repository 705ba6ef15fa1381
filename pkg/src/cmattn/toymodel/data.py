"""Synthetic RGB-D scenes: one salient shape, camouflage textures, clean depth.

Every sample renders a random ellipse, rectangle or triangle as the salient
object.  The color channel is deliberately ambiguous (the object color stays
close to the background palette and distractor shapes reuse it), while the
depth channel separates the object cleanly: foreground depth is brighter
(closer) than the background by a fixed margin, both with additive noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor_ops import ContractError, Tensor, bilinear_resize

__all__ = ["SyntheticSample", "gen_synthetic"]

_FG_AREA_RANGE = (0.05, 0.40)
_DEPTH_BG_BASE = 0.30
_DEPTH_FG_BASE = 0.80
_DEPTH_NOISE = 0.02


@dataclass(frozen=True)
class SyntheticSample:
    """One rendered scene: H x W x 3 image, H x W x 1 depth, H x W binary mask."""

    aif: Tensor
    depth: Tensor
    gt: Tensor


def _shape_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    lo, hi = _FG_AREA_RANGE
    while True:
        kind = rng.choice(("ellipse", "rect", "triangle"))
        cy = rng.uniform(0.25, 0.75) * h
        cx = rng.uniform(0.25, 0.75) * w
        if kind == "ellipse":
            ry = rng.uniform(0.12, 0.32) * h
            rx = rng.uniform(0.12, 0.32) * w
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        elif kind == "rect":
            hy = rng.uniform(0.10, 0.30) * h
            hx = rng.uniform(0.10, 0.30) * w
            mask = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
        else:
            pts = np.stack(
                [
                    [cy + rng.uniform(-0.35, 0.35) * h, cx + rng.uniform(-0.35, 0.35) * w]
                    for _ in range(3)
                ]
            )
            mask = np.ones((h, w), dtype=bool)
            for i in range(3):
                ay, ax = pts[i]
                by, bx = pts[(i + 1) % 3]
                oy, ox = pts[(i + 2) % 3]
                cross = (bx - ax) * (yy - ay) - (by - ay) * (xx - ax)
                side = (bx - ax) * (oy - ay) - (by - ay) * (ox - ax)
                mask &= cross * side >= 0.0
        frac = mask.mean()
        if lo <= frac <= hi:
            return mask.astype(np.float64)


def _texture(rng: np.random.Generator, h: int, w: int, base: np.ndarray) -> np.ndarray:
    noise = rng.uniform(-0.15, 0.15, size=(4, 4, 3))
    return np.clip(base[None, None, :] + bilinear_resize(noise, h, w), 0.0, 1.0)


def _render(rng: np.random.Generator, h: int, w: int) -> SyntheticSample:
    base = rng.uniform(0.25, 0.75, size=3)
    aif = _texture(rng, h, w, base)
    mask = _shape_mask(rng, h, w)

    # Camouflaged half the time: object color barely leaves the palette.
    if rng.random() < 0.5:
        fg_color = np.clip(base + rng.uniform(-0.12, 0.12, size=3), 0.0, 1.0)
    else:
        fg_color = rng.uniform(0.0, 1.0, size=3)
    fg_tex = np.clip(fg_color[None, None, :] + rng.normal(0.0, 0.03, size=(h, w, 3)), 0.0, 1.0)
    aif = np.where(mask[:, :, None] == 1.0, fg_tex, aif)

    # Distractors share the object color but live at background depth.
    for _ in range(rng.integers(1, 4)):
        d_mask = _shape_mask(rng, h, w) * (1.0 - mask)
        d_tex = np.clip(
            fg_color[None, None, :] + rng.normal(0.0, 0.05, size=(h, w, 3)), 0.0, 1.0
        )
        aif = np.where(d_mask[:, :, None] == 1.0, d_tex, aif)

    rows = np.arange(h, dtype=np.float64)[:, None] / max(h - 1, 1)
    depth = _DEPTH_BG_BASE + 0.10 * rows + rng.normal(0.0, _DEPTH_NOISE, size=(h, w))
    depth = np.where(
        mask == 1.0, _DEPTH_FG_BASE + rng.normal(0.0, _DEPTH_NOISE, size=(h, w)), depth
    )
    depth = np.clip(depth, 0.0, 1.0)

    return SyntheticSample(
        aif=Tensor(aif), depth=Tensor(depth[:, :, None]), gt=Tensor(mask)
    )


def gen_synthetic(n: int, seed: int, size: tuple[int, int] = (32, 32)) -> list[SyntheticSample]:
    """Render ``n`` scenes deterministically from ``seed``."""
    if n < 1:
        raise ContractError("gen_synthetic: n must be at least 1")
    rng = np.random.default_rng(seed)
    h, w = size
    return [_render(rng, h, w) for _ in range(n)]
