"""Dense array primitives shared by every other module.

Tensors are plain row-major ``numpy.ndarray`` values.  This module adds the
build-wide precision switch and a handful of shape-checked helpers whose
errors name both offending shapes.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_dtype = _PRECISIONS[os.environ.get("R2N_PRECISION", "float32")]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""

    def __init__(self, op: str, a: Sequence[int], b: Sequence[int]):
        self.op = op
        self.shapes = (tuple(a), tuple(b))
        super().__init__(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


class NonFiniteError(FloatingPointError):
    """Raised when a tensor holds NaN or Inf."""

    def __init__(self, name: str, index: tuple[int, ...] | None = None):
        self.name = name
        self.index = index
        where = f" at index {index}" if index is not None else ""
        super().__init__(f"non-finite value in {name}{where}")


def set_precision(name: str) -> None:
    """Select float32 (training) or float64 (gradient checks) for new tensors."""
    global _dtype
    if name not in _PRECISIONS:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}")
    _dtype = _PRECISIONS[name]


def get_dtype() -> type:
    return _dtype


def precision() -> str:
    return "float64" if _dtype is np.float64 else "float32"


def asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=_dtype)


def zeros(shape: Sequence[int]) -> np.ndarray:
    _check_shape(shape)
    return np.zeros(tuple(shape), dtype=_dtype)


def fill(shape: Sequence[int], value: float) -> np.ndarray:
    _check_shape(shape)
    return np.full(tuple(shape), value, dtype=_dtype)


def _check_shape(shape: Sequence[int]) -> None:
    if any(int(d) < 1 for d in shape):
        raise ValueError(f"dimension sizes must be positive, got {tuple(shape)}")


def _same_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape("add", a, b)
    return check_finite(a + b, "add")


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape("sub", a, b)
    return check_finite(a - b, "sub")


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape("mul", a, b)
    return check_finite(a * b, "mul")


def scale(a: np.ndarray, factor: float) -> np.ndarray:
    return check_finite(a * a.dtype.type(factor), "scale")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return check_finite(a @ b, "matmul")


def reshape(a: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError("reshape", a.shape, shape)
    return a.reshape(shape)


def concat_flat(tensors: Iterable[np.ndarray]) -> np.ndarray:
    """Flatten each tensor and join them into one vector."""
    parts = [np.ravel(t) for t in tensors]
    if not parts:
        raise ValueError("concat_flat needs at least one tensor")
    return np.concatenate(parts)


def concat_features(tensors: Sequence[np.ndarray]) -> np.ndarray:
    """Batched ``concat_flat``: flatten every tensor past axis 0 and join on axis 1."""
    n = tensors[0].shape[0]
    for t in tensors[1:]:
        if t.shape[0] != n:
            raise ShapeError("concat_features", tensors[0].shape, t.shape)
    return np.concatenate([t.reshape(n, -1) for t in tensors], axis=1)


def check_finite(a: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise NonFiniteError(name, tuple(int(i) for i in bad))
    return a
