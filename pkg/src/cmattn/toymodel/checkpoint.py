"""Versioned binary checkpoint: named parameter tensors, little-endian float64."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..tensor_ops import ContractError, Tensor

__all__ = ["load_checkpoint", "save_checkpoint"]

_MAGIC = b"CMAT"
_VERSION = 1


def save_checkpoint(path, params: dict[str, Tensor]) -> None:
    """Write parameters in insertion order: name, shape, raw float64 data."""
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<II", _VERSION, len(params))
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", tensor.rank)
        buf += struct.pack(f"<{tensor.rank}I", *tensor.shape)
        buf += np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path) -> dict[str, Tensor]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ContractError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise ContractError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    params: dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        shape = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
        params[name] = Tensor(data)
    return params
