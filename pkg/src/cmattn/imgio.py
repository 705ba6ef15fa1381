"""8-bit grayscale image I/O: binary PGM (P5) and PNG.

Values are exchanged as float64 arrays in [0, 1] (raw byte value / 255).
PGM gives a dependency-light bit-exact path; PNG is read through Pillow.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["ImageFormatError", "read_gray", "write_pgm", "write_png"]

GT_THRESHOLD = 128.0 / 255.0  # ground-truth binarization: raw byte >= 128


class ImageFormatError(OSError):
    """Raised when a file is not a readable 8-bit grayscale image."""


def _parse_pgm(raw: bytes, path) -> np.ndarray:
    # Header tokens may be separated by whitespace and '#' comments.
    tokens: list[bytes] = []
    pos = 2  # past magic
    while len(tokens) < 3:
        if pos >= len(raw):
            raise ImageFormatError(f"{path}: truncated PGM header")
        ch = raw[pos : pos + 1]
        if ch == b"#":
            pos = raw.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end : end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PGM header") from None
    if maxval <= 0 or maxval > 255:
        raise ImageFormatError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace after maxval
    data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    if data.size != width * height:
        raise ImageFormatError(f"{path}: truncated PGM pixel data")
    return data.reshape(height, width).astype(np.float64) / 255.0


def read_gray(path) -> np.ndarray:
    """Read a PGM or PNG file as grayscale floats in [0, 1]."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"P5":
        return _parse_pgm(raw, path)
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float64)
        return arr / 255.0
    raise ImageFormatError(f"{path}: not a PGM (P5) or PNG file")


def _to_bytes(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ImageFormatError("image data must be rank 2")
    return np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, values: np.ndarray) -> None:
    """Write floats in [0, 1] as a binary 8-bit PGM."""
    data = _to_bytes(values)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_png(path, values: np.ndarray) -> None:
    """Write floats in [0, 1] as an 8-bit grayscale PNG."""
    from PIL import Image

    Image.fromarray(_to_bytes(values), mode="L").save(path)
