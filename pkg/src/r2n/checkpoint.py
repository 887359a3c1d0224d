"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic        4 bytes   b"R2NC"
    version      uint32    1
    spec_len     uint32    length of the JSON spec descriptor
    spec         bytes     UTF-8 JSON of ModelSpec (sorted keys, compact)
    n_params     uint32
    n_params x:
        name_len uint16, name (UTF-8)
        ndim     uint8, dims uint32 x ndim
        data     float32 x prod(dims), row-major
    has_optim    uint8
    if has_optim:
        step     uint64
        lr, beta1, beta2, eps   float64 x 4
        first moments, then second moments: float32 blobs in parameter order

Serialising the same model state twice yields identical bytes.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .layers import Adam
from .models import Model, ModelSpec, build_model

MAGIC = b"R2NC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _spec_bytes(spec: ModelSpec) -> bytes:
    return json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":")).encode()


def _write_blob(buf, arr: np.ndarray) -> None:
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(buf, n: int) -> bytes:
    pos = buf.tell()
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint at offset {pos}: wanted {n} bytes, got {len(data)}")
    return data


def _read_blob(buf) -> np.ndarray:
    (ndim,) = struct.unpack("<B", _read_exact(buf, 1))
    shape = struct.unpack(f"<{ndim}I", _read_exact(buf, 4 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    return np.frombuffer(_read_exact(buf, 4 * count), dtype="<f4").reshape(shape)


def to_bytes(model: Model, optimizer: Adam | None = None) -> bytes:
    buf = io.BytesIO()
    spec = _spec_bytes(model.spec)
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(spec)))
    buf.write(spec)
    named = model.named_parameters()
    buf.write(struct.pack("<I", len(named)))
    for name, p in named:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        _write_blob(buf, p)
    buf.write(struct.pack("<B", optimizer is not None))
    if optimizer is not None:
        buf.write(struct.pack("<Q", optimizer.t))
        buf.write(struct.pack("<4d", optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps))
        for arr in optimizer.m + optimizer.v:
            _write_blob(buf, arr)
    return buf.getvalue()


def from_bytes(data: bytes) -> tuple[Model, dict | None]:
    """Rebuild the model; the second item holds optimizer state if one was saved."""
    buf = io.BytesIO(data)
    magic = _read_exact(buf, 4)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    version, spec_len = struct.unpack("<II", _read_exact(buf, 8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    spec = ModelSpec(**json.loads(_read_exact(buf, spec_len)))
    model = build_model(spec)
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    named = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read_exact(buf, 2))
        name = _read_exact(buf, nlen).decode()
        named[name] = _read_blob(buf)
    model.load_parameters(named)
    (has_opt,) = struct.unpack("<B", _read_exact(buf, 1))
    state = None
    if has_opt:
        (t,) = struct.unpack("<Q", _read_exact(buf, 8))
        lr, b1, b2, eps = struct.unpack("<4d", _read_exact(buf, 32))
        moments = [_read_blob(buf) for _ in range(2 * count)]
        state = {"t": t, "lr": lr, "beta1": b1, "beta2": b2, "eps": eps,
                 "m": moments[:count], "v": moments[count:]}
    return model, state


def restore_optimizer(model: Model, state: dict) -> Adam:
    opt = Adam(model.parameters(), state["lr"], state["beta1"], state["beta2"], state["eps"])
    opt.t = state["t"]
    for dst, src in zip(opt.m + opt.v, state["m"] + state["v"]):
        dst[...] = src
    return opt


def save(model: Model, path, optimizer: Adam | None = None) -> None:
    Path(path).write_bytes(to_bytes(model, optimizer))


def load(path) -> tuple[Model, dict | None]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return from_bytes(path.read_bytes())
