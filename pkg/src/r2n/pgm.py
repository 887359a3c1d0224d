"""Binary PGM (P5) reading and writing, plus the montage used by the CLI."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


class PgmError(ValueError):
    pass


def to_uint8(img: np.ndarray, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Linearly map ``[lo, hi]`` (default: the image's own range) onto 0..255.

    A constant image maps to a constant output: 0 when it equals ``lo``.
    """
    img = np.asarray(img, dtype=np.float64)
    lo = float(img.min()) if lo is None else lo
    hi = float(img.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros(img.shape, np.uint8)
    return np.rint(np.clip((img - lo) / (hi - lo), 0.0, 1.0) * 255).astype(np.uint8)


def write_pgm(path, img: np.ndarray, lo: float | None = 0.0, hi: float | None = 1.0) -> None:
    """Write a 2-D array as an 8-bit binary PGM.

    uint8 arrays are written verbatim; float arrays go through :func:`to_uint8`.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise PgmError(f"PGM needs a 2-D array, got shape {img.shape}")
    data = img if img.dtype == np.uint8 else to_uint8(img, lo, hi)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())


_HEADER = re.compile(rb"P5\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s")


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM into a float array scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    m = _HEADER.match(raw)
    if not m:
        raise PgmError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 256:
        raise PgmError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    body = raw[m.end():]
    if len(body) < w * h:
        raise PgmError(f"{path}: truncated pixel data, expected {w * h} bytes, got {len(body)}")
    data = np.frombuffer(body, np.uint8, count=w * h).reshape(h, w)
    return data.astype(np.float64) / maxval


def montage(tiles: list[np.ndarray], cols: int, pad: int = 1) -> np.ndarray:
    """Tile equally sized 2-D images row-major onto a zero background."""
    if not tiles:
        raise PgmError("montage needs at least one tile")
    th, tw = tiles[0].shape
    rows = -(-len(tiles) // cols)
    out = np.zeros((rows * (th + pad) + pad, cols * (tw + pad) + pad), dtype=np.asarray(tiles[0]).dtype)
    for i, t in enumerate(tiles):
        r, c = divmod(i, cols)
        y, x = pad + r * (th + pad), pad + c * (tw + pad)
        out[y:y + th, x:x + tw] = t
    return out
