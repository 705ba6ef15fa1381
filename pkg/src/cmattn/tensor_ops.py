"""Dense float64 tensors and differentiable primitives on an operation tape.

Every operation takes an optional ``tape``; when given, the application is
recorded so that :meth:`Tape.backward` can later replay the tape in reverse
and accumulate analytic gradients.  Tensors are immutable values and safe to
share across threads; a tape is confined to a single thread.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

__all__ = [
    "ContractError",
    "Gradients",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "add_channel_bias",
    "add_scalar",
    "bilinear_resize",
    "clip",
    "concat_channels",
    "conv2d",
    "deconv2d",
    "divide",
    "drop_channel",
    "expand_scalar",
    "flatten",
    "hadamard",
    "log",
    "matmul",
    "mean_all",
    "mul_scalar",
    "neg",
    "relu",
    "reshape3d",
    "sigmoid",
    "softmax_columns",
    "sub",
    "sum_all",
    "transpose2d",
    "upsample_bilinear",
]


class ShapeError(ValueError):
    """Raised when tensor extents violate an operation's contract."""


class ContractError(ValueError):
    """Raised when a non-shape precondition of an operation is violated."""


class Tensor:
    """Immutable dense array of 64-bit floats, rank at most 4.

    The constructor copies its input; results of library operations wrap
    freshly allocated arrays without copying.  The backing array is marked
    read-only, which is what makes sharing across threads safe.
    """

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float64, order="C", copy=True)
        if arr.ndim > 4:
            raise ShapeError(f"rank {arr.ndim} exceeds the supported maximum of 4")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Internal fast path: takes ownership of a freshly computed array.
        # ascontiguousarray would promote rank-0 arrays to rank 1, so guard it.
        t = object.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        if not arr.flags.owndata and arr.base is not None:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(t, "data", arr)
        return t

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls._wrap(np.zeros(shape, dtype=np.float64))

    @classmethod
    def full(cls, shape, value: float) -> "Tensor":
        return cls._wrap(np.full(shape, float(value), dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def tolist(self):
        return self.data.tolist()

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


@dataclass
class TapeEntry:
    """One recorded primitive application."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    ctx: dict = field(default_factory=dict)


class Gradients:
    """Gradient lookup produced by :meth:`Tape.backward`, keyed by tensor."""

    def __init__(self, grads: dict[int, np.ndarray], tensors: dict[int, Tensor]):
        self._grads = grads
        self._tensors = tensors

    def get(self, t: Tensor) -> np.ndarray | None:
        return self._grads.get(id(t))

    def __getitem__(self, t: Tensor) -> np.ndarray:
        try:
            return self._grads[id(t)]
        except KeyError:
            raise KeyError(f"no gradient recorded for {t!r}") from None

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads

    def items(self) -> Iterator[tuple[Tensor, np.ndarray]]:
        for key, grad in self._grads.items():
            yield self._tensors[key], grad


class Tape:
    """Ordered record of primitive applications for reverse-mode replay.

    Replaying the tape backwards visits every entry exactly once and
    accumulates each entry's input gradients exactly once.
    """

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, **ctx) -> None:
        self.entries.append(TapeEntry(op, inputs, output, ctx))

    def backward(self, root: Tensor, seed: np.ndarray | None = None) -> Gradients:
        """Accumulate gradients of ``root`` with respect to every recorded tensor.

        ``seed`` is the upstream gradient at the root (defaults to ones, i.e.
        the gradient of ``sum(root)``).
        """
        if seed is None:
            seed_arr = np.ones(root.shape, dtype=np.float64)
        else:
            seed_arr = np.asarray(seed, dtype=np.float64)
            if seed_arr.shape != root.shape:
                raise ShapeError(
                    f"seed shape {seed_arr.shape} does not match root shape {root.shape}"
                )
        grads: dict[int, np.ndarray] = {id(root): seed_arr}
        tensors: dict[int, Tensor] = {id(root): root}
        for entry in reversed(self.entries):
            g_out = grads.get(id(entry.output))
            if g_out is None:
                continue
            for t, g in zip(entry.inputs, _BACKWARD[entry.op](entry, g_out)):
                if g is None:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                    tensors[key] = t
        return Gradients(grads, tensors)


def _require_rank(x: Tensor, rank: int, op: str) -> None:
    if x.rank != rank:
        raise ShapeError(f"{op}: expected rank-{rank} tensor, got shape {x.shape}")


# ---------------------------------------------------------------------------
# Reshaping between the H x W x C and C x HW layouts.


def flatten(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Reshape an H x W x C feature map to C x HW, positions in row-major order."""
    _require_rank(x, 3, "flatten")
    h, w, c = x.shape
    out = Tensor._wrap(np.transpose(x.data, (2, 0, 1)).reshape(c, h * w))
    if tape is not None:
        tape.record("flatten", (x,), out, h=h, w=w)
    return out


def reshape3d(x: Tensor, h: int, w: int, tape: Tape | None = None) -> Tensor:
    """Exact inverse of :func:`flatten`: C x HW back to H x W x C."""
    _require_rank(x, 2, "reshape3d")
    c, hw = x.shape
    if h * w != hw:
        raise ShapeError(f"reshape3d: {h}x{w} incompatible with {hw} positions")
    out = Tensor._wrap(np.transpose(x.data.reshape(c, h, w), (1, 2, 0)))
    if tape is not None:
        tape.record("reshape3d", (x,), out)
    return out


def transpose2d(x: Tensor, tape: Tape | None = None) -> Tensor:
    _require_rank(x, 2, "transpose2d")
    out = Tensor._wrap(x.data.T)
    if tape is not None:
        tape.record("transpose2d", (x,), out)
    return out


def drop_channel(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Squeeze a single-channel H x W x 1 map down to H x W."""
    _require_rank(x, 3, "drop_channel")
    if x.shape[2] != 1:
        raise ShapeError(f"drop_channel: expected one channel, got {x.shape}")
    out = Tensor._wrap(x.data[:, :, 0])
    if tape is not None:
        tape.record("drop_channel", (x,), out)
    return out


# ---------------------------------------------------------------------------
# Linear algebra and normalization.


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _require_rank(a, 2, "matmul")
    _require_rank(b, 2, "matmul")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents differ, {a.shape} x {b.shape}")
    out = Tensor._wrap(a.data @ b.data)
    if tape is not None:
        tape.record("matmul", (a, b), out)
    return out


def softmax_columns(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Column-wise softmax of an M x N matrix, stabilized by max subtraction."""
    _require_rank(x, 2, "softmax_columns")
    z = x.data - x.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    out = Tensor._wrap(e / e.sum(axis=0, keepdims=True))
    if tape is not None:
        tape.record("softmax_columns", (x,), out)
    return out


# ---------------------------------------------------------------------------
# Elementwise operations.


def _binary_elementwise(op: str, a: Tensor, b: Tensor, fn, tape: Tape | None) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")
    out = Tensor._wrap(fn(a.data, b.data))
    if tape is not None:
        tape.record(op, (a, b), out)
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    return _binary_elementwise("add", a, b, np.add, tape)


def sub(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    return _binary_elementwise("sub", a, b, np.subtract, tape)


def hadamard(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    return _binary_elementwise("hadamard", a, b, np.multiply, tape)


def divide(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    return _binary_elementwise("divide", a, b, np.divide, tape)


def neg(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(-x.data)
    if tape is not None:
        tape.record("neg", (x,), out)
    return out


def add_scalar(x: Tensor, c: float, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(x.data + float(c))
    if tape is not None:
        tape.record("add_scalar", (x,), out)
    return out


def mul_scalar(x: Tensor, c: float, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(x.data * float(c))
    if tape is not None:
        tape.record("mul_scalar", (x,), out, c=float(c))
    return out


def sigmoid(x: Tensor, tape: Tape | None = None) -> Tensor:
    # Evaluated on the non-overflowing branch of exp for either sign.
    d = x.data
    out_arr = np.empty_like(d)
    pos = d >= 0
    out_arr[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    out_arr[~pos] = ez / (1.0 + ez)
    out = Tensor._wrap(out_arr)
    if tape is not None:
        tape.record("sigmoid", (x,), out)
    return out


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(np.maximum(x.data, 0.0))
    if tape is not None:
        tape.record("relu", (x,), out)
    return out


def log(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Natural log; the input must be strictly positive."""
    out = Tensor._wrap(np.log(x.data))
    if tape is not None:
        tape.record("log", (x,), out)
    return out


def clip(x: Tensor, lo: float, hi: float, tape: Tape | None = None) -> Tensor:
    """Clamp to [lo, hi]; gradient passes through only strictly inside the band."""
    out = Tensor._wrap(np.clip(x.data, lo, hi))
    if tape is not None:
        tape.record("clip", (x,), out, lo=float(lo), hi=float(hi))
    return out


# ---------------------------------------------------------------------------
# Reductions and broadcasts.


def sum_all(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(np.asarray(x.data.sum()))
    if tape is not None:
        tape.record("sum_all", (x,), out)
    return out


def mean_all(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(np.asarray(x.data.mean()))
    if tape is not None:
        tape.record("mean_all", (x,), out)
    return out


def expand_scalar(x: Tensor, shape: tuple[int, ...], tape: Tape | None = None) -> Tensor:
    """Broadcast a rank-0 tensor to ``shape``."""
    if x.rank != 0:
        raise ShapeError(f"expand_scalar: expected rank-0 input, got {x.shape}")
    out = Tensor._wrap(np.full(shape, x.data.reshape(())))
    if tape is not None:
        tape.record("expand_scalar", (x,), out)
    return out


def concat_channels(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Stack two H x W x C feature maps along the channel axis."""
    _require_rank(a, 3, "concat_channels")
    _require_rank(b, 3, "concat_channels")
    if a.shape[:2] != b.shape[:2]:
        raise ShapeError(f"concat_channels: spatial extents differ, {a.shape} vs {b.shape}")
    out = Tensor._wrap(np.concatenate([a.data, b.data], axis=2))
    if tape is not None:
        tape.record("concat_channels", (a, b), out, split=a.shape[2])
    return out


def add_channel_bias(x: Tensor, bias: Tensor, tape: Tape | None = None) -> Tensor:
    """Add a per-channel bias (rank-1, length C) to an H x W x C map."""
    _require_rank(x, 3, "add_channel_bias")
    _require_rank(bias, 1, "add_channel_bias")
    if bias.shape[0] != x.shape[2]:
        raise ShapeError(
            f"add_channel_bias: {bias.shape[0]} biases for {x.shape[2]} channels"
        )
    out = Tensor._wrap(x.data + bias.data[None, None, :])
    if tape is not None:
        tape.record("add_channel_bias", (x, bias), out)
    return out


# ---------------------------------------------------------------------------
# Convolution, transposed convolution, bilinear resampling.


def _conv_out_extent(n: int, k: int, stride: int, padding: int, dilation: int) -> int:
    eff = dilation * (k - 1) + 1
    return (n + 2 * padding - eff) // stride + 1


def _pad2d(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    h, w, c = x.shape
    out = np.zeros((h + 2 * p, w + 2 * p, c), dtype=np.float64)
    out[p : p + h, p : p + w] = x
    return out


def _windows(padded: np.ndarray, kh: int, kw: int, stride: int, dilation: int) -> np.ndarray:
    # View of shape (H', W', Cin, kh, kw) over the padded input.
    eff_h = dilation * (kh - 1) + 1
    eff_w = dilation * (kw - 1) + 1
    view = np.lib.stride_tricks.sliding_window_view(padded, (eff_h, eff_w), axis=(0, 1))
    return view[::stride, ::stride, :, ::dilation, ::dilation]


def _is_pointwise(k: np.ndarray, stride: int, padding: int, dilation: int) -> bool:
    return k.shape[0] == 1 and k.shape[1] == 1 and stride == 1 and padding == 0 and dilation == 1


def _conv2d_forward(x: np.ndarray, k: np.ndarray, stride: int, padding: int, dilation: int) -> np.ndarray:
    h, w, cin = x.shape
    kh, kw = k.shape[:2]
    if _is_pointwise(k, stride, padding, dilation):
        return (x.reshape(h * w, cin) @ k[0, 0]).reshape(h, w, k.shape[3])
    oh = _conv_out_extent(h, kh, stride, padding, dilation)
    ow = _conv_out_extent(w, kw, stride, padding, dilation)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv2d: window {kh}x{kw} (dilation {dilation}) does not fit "
            f"{h}x{w} input with padding {padding}"
        )
    win = _windows(_pad2d(x, padding), kh, kw, stride, dilation)
    return np.tensordot(win, k, axes=([3, 4, 2], [0, 1, 2]))


def _conv2d_input_grad(
    g: np.ndarray, k: np.ndarray, in_shape: tuple[int, int, int],
    stride: int, padding: int, dilation: int,
) -> np.ndarray:
    # Scatters the upstream gradient back through every kernel tap; slices for
    # distinct taps never alias, so plain += keeps the result deterministic.
    h, w, cin = in_shape
    kh, kw = k.shape[:2]
    oh, ow = g.shape[:2]
    if _is_pointwise(k, stride, padding, dilation):
        return (g.reshape(oh * ow, -1) @ k[0, 0].T).reshape(h, w, cin)
    dpad = np.zeros((h + 2 * padding, w + 2 * padding, cin), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            contrib = g @ k[i, j].T
            dpad[
                i * dilation : i * dilation + stride * oh : stride,
                j * dilation : j * dilation + stride * ow : stride,
            ] += contrib
    if padding:
        return dpad[padding:-padding, padding:-padding]
    return dpad


def _conv2d_kernel_grad(
    x: np.ndarray, g: np.ndarray, kh: int, kw: int, stride: int, padding: int, dilation: int
) -> np.ndarray:
    if kh == 1 and kw == 1 and stride == 1 and padding == 0 and dilation == 1:
        h, w, cin = x.shape
        dk = x.reshape(h * w, cin).T @ g.reshape(h * w, -1)
        return dk.reshape(1, 1, cin, -1)
    win = _windows(_pad2d(x, padding), kh, kw, stride, dilation)
    dk = np.tensordot(win, g, axes=([0, 1], [0, 1]))  # (Cin, kh, kw, Cout)
    return np.transpose(dk, (1, 2, 0, 3))


def conv2d(
    x: Tensor,
    k: Tensor,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
    tape: Tape | None = None,
) -> Tensor:
    """2-D cross-correlation of an H x W x Cin map with a kh x kw x Cin x Cout kernel."""
    _require_rank(x, 3, "conv2d")
    if k.rank != 4:
        raise ShapeError(f"conv2d: kernel must be rank 4, got {k.shape}")
    if k.shape[2] != x.shape[2]:
        raise ShapeError(
            f"conv2d: kernel expects {k.shape[2]} input channels, map has {x.shape[2]}"
        )
    out = Tensor._wrap(_conv2d_forward(x.data, k.data, stride, padding, dilation))
    if tape is not None:
        tape.record("conv2d", (x, k), out, stride=stride, padding=padding, dilation=dilation)
    return out


def deconv2d(
    y: Tensor,
    k: Tensor,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
    tape: Tape | None = None,
) -> Tensor:
    """Transposed convolution: the adjoint of ``x -> conv2d(x, k, ...)``.

    The kernel keeps conv2d's kh x kw x Cin x Cout layout, so deconv2d maps a
    Cout-channel input to a Cin-channel output of extent
    ``(n - 1) * stride + dilation * (k - 1) + 1 - 2 * padding``.
    """
    _require_rank(y, 3, "deconv2d")
    if k.rank != 4:
        raise ShapeError(f"deconv2d: kernel must be rank 4, got {k.shape}")
    if k.shape[3] != y.shape[2]:
        raise ShapeError(
            f"deconv2d: kernel expects {k.shape[3]} input channels, map has {y.shape[2]}"
        )
    oh_, ow_, _ = y.shape
    kh, kw, cin, _ = k.shape
    h = (oh_ - 1) * stride + dilation * (kh - 1) + 1 - 2 * padding
    w = (ow_ - 1) * stride + dilation * (kw - 1) + 1 - 2 * padding
    if h < 1 or w < 1:
        raise ShapeError(f"deconv2d: output extent {h}x{w} is empty")
    out_arr = _conv2d_input_grad(y.data, k.data, (h, w, cin), stride, padding, dilation)
    out = Tensor._wrap(out_arr)
    if tape is not None:
        tape.record("deconv2d", (y, k), out, stride=stride, padding=padding, dilation=dilation)
    return out


@functools.lru_cache(maxsize=256)
def _axis_resample(n_in: int, n_out: int):
    """Per-axis bilinear indices/weights, align-corners=false convention."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    w_hi = src - lo
    out = (lo, hi, 1.0 - w_hi, w_hi)
    for arr in out:
        arr.setflags(write=False)
    return out


def bilinear_resize(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    """Plain-array bilinear resize of an H x W[x C] array (no tape)."""
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    ry_lo, ry_hi, wy_lo, wy_hi = _axis_resample(arr.shape[0], h)
    rx_lo, rx_hi, wx_lo, wx_hi = _axis_resample(arr.shape[1], w)
    out = (
        arr[np.ix_(ry_lo, rx_lo)] * (wy_lo[:, None] * wx_lo[None, :])[:, :, None]
        + arr[np.ix_(ry_lo, rx_hi)] * (wy_lo[:, None] * wx_hi[None, :])[:, :, None]
        + arr[np.ix_(ry_hi, rx_lo)] * (wy_hi[:, None] * wx_lo[None, :])[:, :, None]
        + arr[np.ix_(ry_hi, rx_hi)] * (wy_hi[:, None] * wx_hi[None, :])[:, :, None]
    )
    return out[:, :, 0] if squeeze else out


def upsample_bilinear(x: Tensor, h: int, w: int, tape: Tape | None = None) -> Tensor:
    """Bilinear resampling to h x w (align-corners=false); rank 2 or 3 input."""
    if x.rank not in (2, 3):
        raise ShapeError(f"upsample_bilinear: expected rank 2 or 3, got {x.shape}")
    if h < 1 or w < 1:
        raise ShapeError(f"upsample_bilinear: target {h}x{w} is empty")
    out = Tensor._wrap(bilinear_resize(x.data, h, w))
    if tape is not None:
        tape.record("upsample_bilinear", (x,), out, in_shape=x.shape)
    return out


def _upsample_backward(g: np.ndarray, in_shape: tuple[int, ...]) -> np.ndarray:
    squeeze = len(in_shape) == 2
    if squeeze:
        g = g[:, :, None]
        in_shape = (*in_shape, 1)
    h_out, w_out = g.shape[:2]
    ry_lo, ry_hi, wy_lo, wy_hi = _axis_resample(in_shape[0], h_out)
    rx_lo, rx_hi, wx_lo, wx_hi = _axis_resample(in_shape[1], w_out)
    dx = np.zeros(in_shape, dtype=np.float64)
    for ry, wy in ((ry_lo, wy_lo), (ry_hi, wy_hi)):
        for rx, wx in ((rx_lo, wx_lo), (rx_hi, wx_hi)):
            np.add.at(
                dx,
                (ry[:, None], rx[None, :]),
                g * (wy[:, None] * wx[None, :])[:, :, None],
            )
    return dx[:, :, 0] if squeeze else dx


# ---------------------------------------------------------------------------
# Backward rules, dispatched by op name.  Each rule returns one gradient per
# input (None marks an input that receives no gradient).

_BACKWARD: dict[str, Callable[[TapeEntry, np.ndarray], tuple]] = {}


def _bw(name: str):
    def register(fn):
        _BACKWARD[name] = fn
        return fn

    return register


@_bw("flatten")
def _flatten_bw(entry, g):
    h, w = entry.ctx["h"], entry.ctx["w"]
    c = g.shape[0]
    return (np.transpose(g.reshape(c, h, w), (1, 2, 0)),)


@_bw("reshape3d")
def _reshape3d_bw(entry, g):
    h, w, c = g.shape
    return (np.transpose(g, (2, 0, 1)).reshape(c, h * w),)


@_bw("transpose2d")
def _transpose2d_bw(entry, g):
    return (g.T,)


@_bw("drop_channel")
def _drop_channel_bw(entry, g):
    return (g[:, :, None],)


@_bw("matmul")
def _matmul_bw(entry, g):
    a, b = entry.inputs
    return (g @ b.data.T, a.data.T @ g)


@_bw("softmax_columns")
def _softmax_columns_bw(entry, g):
    s = entry.output.data
    return (s * (g - (g * s).sum(axis=0, keepdims=True)),)


@_bw("add")
def _add_bw(entry, g):
    return (g, g)


@_bw("sub")
def _sub_bw(entry, g):
    return (g, -g)


@_bw("hadamard")
def _hadamard_bw(entry, g):
    a, b = entry.inputs
    return (g * b.data, g * a.data)


@_bw("divide")
def _divide_bw(entry, g):
    a, b = entry.inputs
    return (g / b.data, -g * entry.output.data / b.data)


@_bw("neg")
def _neg_bw(entry, g):
    return (-g,)


@_bw("add_scalar")
def _add_scalar_bw(entry, g):
    return (g,)


@_bw("mul_scalar")
def _mul_scalar_bw(entry, g):
    return (g * entry.ctx["c"],)


@_bw("sigmoid")
def _sigmoid_bw(entry, g):
    s = entry.output.data
    return (g * s * (1.0 - s),)


@_bw("relu")
def _relu_bw(entry, g):
    return (g * (entry.inputs[0].data > 0.0),)


@_bw("log")
def _log_bw(entry, g):
    return (g / entry.inputs[0].data,)


@_bw("clip")
def _clip_bw(entry, g):
    x = entry.inputs[0].data
    inside = (x > entry.ctx["lo"]) & (x < entry.ctx["hi"])
    return (g * inside,)


@_bw("sum_all")
def _sum_all_bw(entry, g):
    return (np.full(entry.inputs[0].shape, g.reshape(())),)


@_bw("mean_all")
def _mean_all_bw(entry, g):
    x = entry.inputs[0]
    return (np.full(x.shape, g.reshape(()) / x.size),)


@_bw("expand_scalar")
def _expand_scalar_bw(entry, g):
    return (np.asarray(g.sum()),)


@_bw("concat_channels")
def _concat_channels_bw(entry, g):
    split = entry.ctx["split"]
    return (g[:, :, :split], g[:, :, split:])


@_bw("add_channel_bias")
def _add_channel_bias_bw(entry, g):
    return (g, g.sum(axis=(0, 1)))


@_bw("conv2d")
def _conv2d_bw(entry, g):
    x, k = entry.inputs
    s, p, d = entry.ctx["stride"], entry.ctx["padding"], entry.ctx["dilation"]
    dx = _conv2d_input_grad(g, k.data, x.shape, s, p, d)
    dk = _conv2d_kernel_grad(x.data, g, k.shape[0], k.shape[1], s, p, d)
    return (dx, dk)


@_bw("deconv2d")
def _deconv2d_bw(entry, g):
    y, k = entry.inputs
    s, p, d = entry.ctx["stride"], entry.ctx["padding"], entry.ctx["dilation"]
    dy = _conv2d_forward(g, k.data, s, p, d)
    dk = _conv2d_kernel_grad(g, y.data, k.shape[0], k.shape[1], s, p, d)
    return (dy, dk)


@_bw("upsample_bilinear")
def _upsample_bilinear_bw(entry, g):
    return (_upsample_backward(g, entry.ctx["in_shape"]),)
