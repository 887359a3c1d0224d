"""Global polar pooling.

A feature map is re-expressed on a polar grid centred on the map, so that an
in-plane rotation about the centre becomes a circular translation along the
angular axis of the pooled output.  Each polar cell takes the max of the
pixels that fall inside it and remembers which pixel won (the switch), so the
backward pass routes gradient only to that pixel.

Conventions:

* pixel ``(x, y)`` = (column, row) maps to ``x_n = x - w/2``, ``y_n = h/2 - y``
  with no half-pixel offset; angles grow counterclockwise and lie in (-pi, pi].
* radial cells are half-open ``[start, start + kernel)`` except the outermost,
  which is closed so a ring of width ``r_max`` covers every pixel.
* angular cells are half-open and wrap modulo 2*pi; cell 0 starts at
  ``-pi - angular_padding``.
* empty cells output 0 and carry the ``EMPTY`` switch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor_core import ShapeError

EMPTY = -1
TWO_PI = 2.0 * math.pi
# absorbs float error in exact partitions such as 2*pi / (pi/36)
_BIN_COUNT_TOL = 1e-9


@dataclass(frozen=True)
class PolarGridSpec:
    angular_kernel: float
    angular_stride: float
    angular_padding: float = 0.0
    radial_kernel: float = 1.0
    radial_stride: float = 1.0
    radial_padding: float = 0.0

    def __post_init__(self):
        if min(self.angular_kernel, self.angular_stride, self.radial_kernel, self.radial_stride) <= 0:
            raise ValueError("polar kernels and strides must be positive")
        if self.angular_padding < 0 or self.radial_padding < 0:
            raise ValueError("polar paddings must be non-negative")
        if self.angular_kernel > TWO_PI + 1e-12:
            raise ValueError("angular kernel cannot exceed 2*pi")

    @classmethod
    def uniform(cls, angular: float, radial: float) -> "PolarGridSpec":
        """Non-overlapping cells: kernel == stride on both axes, no padding."""
        return cls(angular, angular, 0.0, radial, radial, 0.0)


def to_polar(x: float, y: float, w: int, h: int) -> tuple[float, float]:
    """Polar coordinates of pixel (column ``x``, row ``y``) about the map centre."""
    xn = x - w / 2
    yn = -y + h / 2
    r = math.hypot(xn, yn)
    phi = math.atan2(yn, xn) if r > 0 else 0.0
    if phi <= -math.pi:
        phi += TWO_PI
    return r, phi


def polar_coordinates(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``to_polar`` over every pixel; arrays are flattened row-major."""
    ys, xs = np.mgrid[0:h, 0:w]
    xn = (xs - w / 2).ravel().astype(np.float64)
    yn = (-ys + h / 2).ravel().astype(np.float64)
    r = np.hypot(xn, yn)
    phi = np.where(r > 0, np.arctan2(yn, xn), 0.0)
    phi = np.where(phi <= -math.pi, phi + TWO_PI, phi)
    return r, phi


def _bin_count(extent: float, kernel: float, stride: float) -> int:
    return math.ceil((extent - kernel) / stride - _BIN_COUNT_TOL) + 1


def _snap(v: np.ndarray) -> np.ndarray:
    """Round values within tolerance of an integer onto it (cell boundaries in stride units)."""
    r = np.rint(v)
    return np.where(np.abs(v - r) < _BIN_COUNT_TOL, r, v)


@dataclass(frozen=True, eq=False)
class PolarBinning:
    """Precomputed cell membership for one (height, width, spec)."""

    height: int
    width: int
    spec: PolarGridSpec
    n_radial: int
    n_angular: int
    r: np.ndarray
    phi: np.ndarray
    # (cell, pixel) membership pairs sorted by cell, then pixel
    pair_cell: np.ndarray
    pair_pixel: np.ndarray
    # ids of non-empty cells, and their members as rows padded with the index
    # height*width (a sentinel column that never wins a max)
    nonempty: np.ndarray
    table: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.n_radial * self.n_angular

    @property
    def r_max(self) -> float:
        return math.hypot(self.width / 2, self.height / 2)

    def members(self, cell: int) -> np.ndarray:
        """Flat pixel indices belonging to ``cell`` (= radial * n_angular + angular)."""
        return self.pair_pixel[self.pair_cell == cell]


def _radial_membership(r: np.ndarray, spec: PolarGridSpec, n_rad: int) -> np.ndarray:
    u = _snap((r + spec.radial_padding) / spec.radial_stride)  # radius in stride units
    d = _snap(u[:, None] - np.arange(n_rad))
    width = spec.radial_kernel / spec.radial_stride
    inside = (d >= 0) & (d < width)
    inside[:, -1] = (d[:, -1] >= 0) & (d[:, -1] <= width)
    return inside


def _angular_membership(phi: np.ndarray, spec: PolarGridSpec, n_ang: int) -> np.ndarray:
    period = 2 * math.pi / spec.angular_stride
    u = (phi + math.pi + spec.angular_padding) / spec.angular_stride
    d = _snap(np.mod(u[:, None] - np.arange(n_ang), period))
    d = np.where(np.abs(d - period) < _BIN_COUNT_TOL, 0.0, d)
    return d < spec.angular_kernel / spec.angular_stride - _BIN_COUNT_TOL


@lru_cache(maxsize=64)
def plan_binning(h: int, w: int, spec: PolarGridSpec) -> PolarBinning:
    r_max = math.hypot(w / 2, h / 2)
    n_rad = _bin_count(r_max + 2 * spec.radial_padding, spec.radial_kernel, spec.radial_stride)
    n_ang = _bin_count(TWO_PI + 2 * spec.angular_padding, spec.angular_kernel, spec.angular_stride)
    if n_rad < 1 or n_ang < 1:
        raise ValueError(f"polar spec {spec} yields no cells on a {h}x{w} map")

    r, phi = polar_coordinates(h, w)
    in_rad = _radial_membership(r, spec, n_rad)
    in_ang = _angular_membership(phi, spec, n_ang)
    member = in_rad[:, :, None] & in_ang[:, None, :]  # pixel x radial x angular
    pix, ri, ai = np.nonzero(member)
    cell = ri * n_ang + ai
    order = np.lexsort((pix, cell))
    pair_cell = cell[order].astype(np.int64)
    pair_pixel = pix[order].astype(np.int64)

    nonempty, start, counts = np.unique(pair_cell, return_index=True, return_counts=True)
    width = int(counts.max()) if len(counts) else 1
    table = np.full((len(nonempty), width), h * w, dtype=np.int64)
    slot = np.arange(len(pair_cell)) - np.repeat(start, counts)
    table[np.repeat(np.arange(len(nonempty)), counts), slot] = pair_pixel
    for arr in (r, phi, pair_cell, pair_pixel, nonempty, table):
        arr.flags.writeable = False
    return PolarBinning(h, w, spec, n_rad, n_ang, r, phi, pair_cell, pair_pixel, nonempty, table)


def gp_pool_forward(x: np.ndarray, binning: PolarBinning) -> tuple[np.ndarray, np.ndarray]:
    """Max-pool an NCHW map over polar cells.

    Returns ``(out, switches)`` with shapes ``N x C x n_radial x n_angular``;
    switches hold flat H*W pixel indices, or ``EMPTY``.
    """
    n, c, h, w = x.shape
    if (h, w) != (binning.height, binning.width):
        raise ShapeError("gp_pool_forward", x.shape, (binning.height, binning.width))
    # pixel-major layout so every gather copies contiguous rows; the extra
    # last row is the -inf sentinel that padded table slots point at
    planes = np.empty((h * w + 1, n * c), dtype=x.dtype)
    planes[:-1] = x.reshape(n * c, h * w).T
    planes[-1] = -np.inf
    table = binning.table
    maxima = planes[table[:, 0]]
    arg = np.zeros(maxima.shape, dtype=np.int64)
    for slot in range(1, table.shape[1]):
        v = planes[table[:, slot]]
        # strict '>' keeps the earliest (lowest pixel index) maximum
        better = v > maxima
        np.copyto(maxima, v, where=better)
        arg[better] = slot

    out = np.zeros((binning.n_cells, n * c), dtype=x.dtype)
    out[binning.nonempty] = maxima
    switches = np.full((binning.n_cells, n * c), EMPTY, dtype=np.int64)
    switches[binning.nonempty] = table[np.arange(len(table))[:, None], arg]
    out, switches = out.T, switches.T
    shape = (n, c, binning.n_radial, binning.n_angular)
    return out.reshape(shape), switches.reshape(shape)


def gp_pool_backward(grad_out: np.ndarray, switches: np.ndarray, input_shape) -> np.ndarray:
    """Route each cell's gradient to its switch pixel; shared winners accumulate."""
    n, c, h, w = input_shape
    if grad_out.shape != switches.shape or switches.shape[:2] != (n, c):
        raise ShapeError("gp_pool_backward", grad_out.shape, switches.shape)
    sw = switches.reshape(n * c, -1)
    g = grad_out.reshape(n * c, -1)
    valid = sw != EMPTY
    flat = (sw + (np.arange(n * c) * (h * w))[:, None])[valid]
    grad = np.bincount(flat, weights=g[valid], minlength=n * c * h * w)
    return grad.astype(grad_out.dtype).reshape(n, c, h, w)


class GPPool:
    """Layer wrapper with the same forward/backward protocol as ``layers.Layer``."""

    def __init__(self, spec: PolarGridSpec):
        self.spec = spec
        self.params: dict = {}
        self.grads: dict = {}
        self.switches = None
        self._in_shape = None

    def output_shape(self, h: int, w: int) -> tuple[int, int]:
        b = plan_binning(h, w, self.spec)
        return b.n_radial, b.n_angular

    def forward(self, x, train=False):
        binning = plan_binning(x.shape[2], x.shape[3], self.spec)
        out, self.switches = gp_pool_forward(x, binning)
        self._in_shape = x.shape
        return out

    def backward(self, dout):
        return gp_pool_backward(dout, self.switches, self._in_shape)

    __call__ = forward


def occupancy(binning: PolarBinning) -> np.ndarray:
    """Boolean (n_radial, n_angular) map of cells that contain at least one pixel."""
    mask = np.zeros(binning.n_cells, dtype=bool)
    mask[binning.nonempty] = True
    return mask.reshape(binning.n_radial, binning.n_angular)


def comparable_rings(binning: PolarBinning, min_occupancy: float = 0.5) -> np.ndarray:
    """Radial rows usable for rotation comparisons.

    A ring qualifies when it lies inside the inscribed disk (rotating with
    zero fill crops everything beyond it) and at least ``min_occupancy`` of
    its cells hold a pixel.
    """
    spec = binning.spec
    outer = -spec.radial_padding + spec.radial_stride * np.arange(binning.n_radial) + spec.radial_kernel
    inside = outer <= min(binning.height, binning.width) / 2
    return np.flatnonzero(inside & (occupancy(binning).mean(axis=1) >= min_occupancy))


def angular_shift(base: np.ndarray, other: np.ndarray, valid: np.ndarray | None = None) -> int:
    """Circular shift along the last axis that best aligns ``base`` onto ``other``.

    Returns ``s`` in ``[0, n)`` maximising the mean-centred circular
    cross-correlation of ``roll(base, s)`` with ``other``.  ``valid`` masks
    cells (broadcast over leading axes) that take part, typically the
    non-empty ones; the correlation at each shift is normalised by the number
    of overlapping valid cells.  A counterclockwise rotation by ``k`` angular
    strides shows up as ``s == k``.
    """
    n_ang = base.shape[-1]
    if valid is None:
        valid = np.ones(base.shape[-2:], dtype=bool)
    v = np.broadcast_to(valid, base.shape).reshape(-1, n_ang).astype(np.float64)
    a = base.reshape(-1, n_ang).astype(np.float64)
    b = other.reshape(-1, n_ang).astype(np.float64)
    a = (a - a[v > 0].mean()) * v
    b = (b - b[v > 0].mean()) * v

    def xcorr(p, q):
        return np.fft.irfft((np.conj(np.fft.rfft(p, axis=-1)) * np.fft.rfft(q, axis=-1)).sum(axis=0), n=n_ang)

    score = xcorr(a, b) / np.maximum(np.rint(xcorr(v, v)), 1.0)
    return int(np.argmax(score))
