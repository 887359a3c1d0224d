import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import gaussian_filter

from r2n import warp as W
from r2n.tensor_core import ShapeError

from oracles import finite_diff_grad


def smooth_image(seed, size=28):
    img = gaussian_filter(np.random.default_rng(seed).random((size, size)), 2.0)
    img -= img.min()
    return img / img.max()


def disk(size, frac=0.7):
    yy, xx = np.mgrid[0:size, 0:size]
    return np.hypot(xx - size / 2, size / 2 - yy) <= frac * size / 2


def test_rotation_matrix_values():
    npt.assert_array_equal(W.build_rotation_matrix(0.0), [[1, 0, 0], [0, 1, 0]])
    npt.assert_allclose(W.build_rotation_matrix(math.pi / 2), [[0, -1, 0], [1, 0, 0]], atol=1e-16)
    npt.assert_allclose(W.build_rotation_matrix(math.pi / 6), [[0.8660254, -0.5, 0], [0.5, 0.8660254, 0]], atol=1e-7)
    assert W.build_rotation_matrix(np.zeros(3)).shape == (3, 2, 3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10))
def test_rotation_block_is_special_orthogonal(theta):
    m = W.build_rotation_matrix(theta)
    npt.assert_allclose(m[:, :2] @ m[:, :2].T, np.eye(2), atol=1e-12)
    assert np.linalg.det(m[:, :2]) == pytest.approx(1.0)
    npt.assert_array_equal(m[:, 2], 0.0)


def test_normalize_angle_range():
    assert W.normalize_angle(math.pi) == pytest.approx(math.pi)
    assert W.normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert W.normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    t = W.normalize_angle(np.linspace(-20, 20, 101))
    assert np.all((t > -math.pi) & (t <= math.pi))


def test_identity_grid_is_the_lattice():
    grid = W.affine_grid(W.build_rotation_matrix(0.0), 6, 8)
    xt, yt = W.base_lattice(6, 8)
    npt.assert_array_equal(grid[..., 0], xt)
    npt.assert_array_equal(grid[..., 1], yt)


def test_half_turn_reflects_the_lattice():
    grid = W.affine_grid(W.build_rotation_matrix(math.pi), 6, 8)
    xt, yt = W.base_lattice(6, 8)
    npt.assert_allclose(grid[..., 0], -xt, atol=1e-15)
    npt.assert_allclose(grid[..., 1], -yt, atol=1e-15)


def test_corner_under_quarter_turn():
    m = W.build_rotation_matrix(math.pi / 2)
    npt.assert_allclose(m @ np.array([1.0, 1.0, 1.0]), [-1.0, 1.0], atol=1e-15)


def test_identity_sampling_is_exact():
    x = np.random.default_rng(0).random((2, 3, 28, 28))
    npt.assert_array_equal(W.warp(x, 0.0), x)
    npt.assert_array_equal(W.warp(x.astype(np.float32), np.zeros(2)), x.astype(np.float32))


def test_bilinear_sample_shape_check():
    with pytest.raises(ShapeError):
        W.bilinear_sample(np.zeros((2, 1, 4, 4)), np.zeros((1, 4, 4, 2)))


def test_outside_samples_are_zero():
    x = np.ones((1, 1, 4, 4))
    grid = np.full((1, 2, 2, 2), 5.0)
    out, _ = W.bilinear_sample(x, grid)
    npt.assert_array_equal(out, 0.0)


def test_half_pixel_sample_interpolates():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    # pixel (col 1.5, row 1) in normalised coordinates
    grid = np.array([[[[(1.5 - 2) / 2, (2 - 1) / 2]]]])
    out, _ = W.bilinear_sample(x, grid)
    assert out[0, 0, 0, 0] == pytest.approx(5.5)


def test_rotate_image_is_counterclockwise():
    img = np.zeros((28, 28))
    img[14, 20] = 1.0  # on the +x axis, 6 px right of the centre
    out = W.rotate_image(img, math.pi / 2)
    assert np.unravel_index(np.argmax(out), out.shape) == (8, 14)  # now on the +y axis (up)


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_error_inside_the_central_disk(seed):
    img = smooth_image(seed)
    theta = np.random.default_rng(seed).uniform(-math.pi, math.pi)
    back = W.warp(W.warp(img[None, None], theta), -theta)[0, 0]
    assert np.mean(np.abs(back - img)[disk(28)]) < 0.05


@pytest.mark.parametrize("seed", range(5))
def test_rectification_contract(seed):
    img = smooth_image(seed + 10)
    theta = np.random.default_rng(seed).uniform(-math.pi / 2, math.pi / 2)
    rectified = W.warp(W.rotate_image(img, theta)[None, None], theta)[0, 0]
    assert np.mean(np.abs(rectified - img)[disk(28)]) < 0.05


def test_full_turn_gives_the_same_output():
    x = np.random.default_rng(1).random((1, 1, 10, 10))
    npt.assert_allclose(W.warp(x, 0.3), W.warp(x, 0.3 + 2 * math.pi), atol=1e-12)


def test_input_gradient_matches_finite_differences(float64):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 8, 8))
    theta = np.array([0.7])
    proj = rng.standard_normal(x.shape)
    warp = W.RotationWarp()
    warp.forward(x, theta)
    dx, _ = warp.backward(proj)
    num = finite_diff_grad(lambda v: float(np.sum(W.warp(v, theta) * proj)), x)
    assert np.max(np.abs(dx - num) / np.maximum(np.abs(dx) + np.abs(num), 1e-12)) < 1e-4


@pytest.mark.parametrize("theta", [-2.5, -0.4, 0.9, 3.0])
def test_theta_gradient_matches_finite_differences(float64, theta):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 1, 8, 8))
    proj = rng.standard_normal(x.shape)
    warp = W.RotationWarp()
    warp.forward(x, np.array([theta]))
    _, dtheta = warp.backward(proj)
    num = finite_diff_grad(lambda t: float(np.sum(W.warp(x, t) * proj)), np.array([theta]))
    assert abs(dtheta[0] - num[0]) / (abs(dtheta[0]) + abs(num[0])) < 1e-4


def test_batched_angles_act_per_sample():
    x = np.random.default_rng(4).random((3, 1, 12, 12))
    thetas = np.array([0.1, -0.5, 1.2])
    batched = W.warp(x, thetas)
    for i, t in enumerate(thetas):
        npt.assert_array_equal(batched[i], W.warp(x[i:i + 1], t)[0])
