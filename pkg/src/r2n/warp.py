"""Rotation-only spatial transformer: matrix, sampling grid, bilinear sampler.

Normalised coordinates share the polar-pooling convention: the origin is the
pixel ``(w/2, h/2)``, x grows to the right and y grows *up*::

    x_n = (col - w/2) / (w/2)        y_n = (h/2 - row) / (h/2)

Sampling with angle ``theta`` reads output pixel ``p`` from input location
``R(theta) p``.  ``rotate_image(img, theta)`` (counterclockwise by ``theta``)
is therefore undone exactly by sampling with the same ``theta``; this pairing
is the one sign convention the dataset and the models rely on.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor_core import ShapeError


def normalize_angle(theta):
    """Map angles into (-pi, pi]."""
    t = np.mod(np.asarray(theta, dtype=np.float64) + math.pi, 2 * math.pi) - math.pi
    t = np.where(t <= -math.pi, t + 2 * math.pi, t)
    return float(t) if t.ndim == 0 else t


def build_rotation_matrix(theta) -> np.ndarray:
    """2x3 rotation matrices ``[[cos, -sin, 0], [sin, cos, 0]]``.

    Scalar ``theta`` gives shape (2, 3); an array of N angles gives (N, 2, 3).
    """
    t = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(t), np.sin(t)
    z = np.zeros_like(t)
    m = np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1)], -2)
    return m


def base_lattice(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalised (x, y) target coordinates of every output pixel, each (h, w)."""
    rows, cols = np.mgrid[0:h, 0:w]
    return (cols - w / 2) / (w / 2), (h / 2 - rows) / (h / 2)


def affine_grid(m: np.ndarray, h: int, w: int) -> np.ndarray:
    """Source coordinates ``M @ (x_t, y_t, 1)`` for every output pixel.

    ``m`` is (2, 3) or (N, 2, 3); the result is (h, w, 2) or (N, h, w, 2)
    with the last axis holding normalised (x_s, y_s).
    """
    xt, yt = base_lattice(h, w)
    homog = np.stack([xt, yt, np.ones_like(xt)], -1)  # h, w, 3
    return np.einsum("...ij,hwj->...hwi", m, homog)


def _grid_to_pixels(grid: np.ndarray, h: int, w: int):
    px = (grid[..., 0] + 1.0) * (w / 2)
    py = (1.0 - grid[..., 1]) * (h / 2)
    # normalising and back costs an ulp or two; snap so lattice points hit pixels exactly
    return _snap_pixel(px), _snap_pixel(py)


def _snap_pixel(p: np.ndarray) -> np.ndarray:
    r = np.rint(p)
    return np.where(np.abs(p - r) < 1e-9, r, p)


def bilinear_sample(x: np.ndarray, grid: np.ndarray):
    """Bilinearly sample NCHW ``x`` at normalised ``grid`` (N, Ho, Wo, 2).

    Neighbours that fall outside the input contribute 0.  Returns
    ``(out, cache)``; pass the cache to :func:`bilinear_sample_backward`.
    """
    n, c, h, w = x.shape
    if grid.ndim != 4 or grid.shape[0] != n or grid.shape[-1] != 2:
        raise ShapeError("bilinear_sample", x.shape, grid.shape)
    ho, wo = grid.shape[1:3]
    px, py = _grid_to_pixels(grid.reshape(n, -1, 2), h, w)
    x0 = np.floor(px)
    y0 = np.floor(py)
    wx = px - x0
    wy = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    xf = x.reshape(n, c, h * w)
    nidx = np.arange(n)[:, None, None]
    cidx = np.arange(c)[None, :, None]
    corners = []
    for dy, dx in ((0, 0), (0, 1), (1, 0), (1, 1)):
        yy, xx = y0 + dy, x0 + dx
        valid = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        idx = np.where(valid, yy * w + xx, 0)
        vals = xf[nidx, cidx, idx[:, None, :]] * valid[:, None, :]
        corners.append((idx, valid, vals))
    (_, _, v00), (_, _, v01), (_, _, v10), (_, _, v11) = corners
    ax = wx[:, None, :].astype(x.dtype)
    ay = wy[:, None, :].astype(x.dtype)
    top = v00 + ax * (v01 - v00)
    bot = v10 + ax * (v11 - v10)
    out = top + ay * (bot - top)
    cache = (x.shape, grid.shape, wx, wy, corners)
    return out.reshape(n, c, ho, wo), cache


def bilinear_sample_backward(grad_out: np.ndarray, cache):
    """Gradients of :func:`bilinear_sample` w.r.t. its input and its grid."""
    (n, c, h, w), gshape, wx, wy, corners = cache
    g = grad_out.reshape(n, c, -1)
    (i00, m00, v00), (i01, m01, v01), (i10, m10, v10), (i11, m11, v11) = corners
    weights = (
        (i00, m00, (1 - wx) * (1 - wy)),
        (i01, m01, wx * (1 - wy)),
        (i10, m10, (1 - wx) * wy),
        (i11, m11, wx * wy),
    )
    base = (np.arange(n * c) * (h * w)).reshape(n, c, 1)
    grad_in = np.zeros(n * c * h * w)
    for idx, mask, wgt in weights:
        contrib = g * (wgt * mask)[:, None, :]
        flat = base + idx[:, None, :]
        grad_in += np.bincount(flat.ravel(), weights=contrib.ravel(), minlength=n * c * h * w)
    grad_in = grad_in.astype(grad_out.dtype).reshape(n, c, h, w)

    ax = wx[:, None, :]
    ay = wy[:, None, :]
    dpx = ((1 - ay) * (v01 - v00) + ay * (v11 - v10)) * g
    dpy = ((1 - ax) * (v10 - v00) + ax * (v11 - v01)) * g
    grad_grid = np.empty(gshape, dtype=np.float64)
    gg = grad_grid.reshape(n, -1, 2)
    gg[..., 0] = dpx.sum(axis=1) * (w / 2)
    gg[..., 1] = dpy.sum(axis=1) * (-h / 2)
    return grad_in, grad_grid


def rotation_matrix_derivative(theta) -> np.ndarray:
    t = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(t), np.sin(t)
    z = np.zeros_like(t)
    return np.stack([np.stack([-s, -c, z], -1), np.stack([c, -s, z], -1)], -2)


def grid_grad_to_theta(grad_grid: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Chain ``d loss / d grid`` through the grid and ``dM/dtheta``; one value per sample."""
    n, h, w, _ = grad_grid.shape
    xt, yt = base_lattice(h, w)
    homog = np.stack([xt, yt, np.ones_like(xt)], -1)
    dm = rotation_matrix_derivative(np.broadcast_to(theta, (n,)))  # n, 2, 3
    dgrid = np.einsum("nij,hwj->nhwi", dm, homog)
    return np.einsum("nhwi,nhwi->n", grad_grid, dgrid)


class RotationWarp:
    """Warp an NCHW batch by per-sample angles; differentiable in input and angle."""

    def __init__(self):
        self._cache = None
        self._theta = None

    def forward(self, x: np.ndarray, theta) -> np.ndarray:
        theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), (x.shape[0],))
        grid = affine_grid(build_rotation_matrix(theta), x.shape[2], x.shape[3])
        out, self._cache = bilinear_sample(x, grid)
        self._theta = theta
        return out

    def backward(self, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_in, grad_grid = bilinear_sample_backward(dout, self._cache)
        return grad_in, grid_grad_to_theta(grad_grid, self._theta)


def warp(x: np.ndarray, theta) -> np.ndarray:
    """Rectify: sample ``x`` at ``R(theta) p`` for every output pixel ``p``."""
    return RotationWarp().forward(x, theta)


def rotate_image(image: np.ndarray, theta) -> np.ndarray:
    """Rotate counterclockwise by ``theta`` about the map centre, zero fill.

    Accepts a single (H, W) image or an NCHW batch with one angle per sample.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if image.ndim == 2:
        return warp(image[None, None], -theta.reshape(1))[0, 0]
    return warp(image, -theta)
