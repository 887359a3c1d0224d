import math

import numpy as np
import numpy.testing as npt
import pytest

from r2n import gp_pooling as gp
from r2n.layers import Conv2d

from oracles import conv2d_direct, finite_diff_grad, gp_pool_reference, uniform_rmse_constant_predictor


def test_finite_diff_of_square():
    g = finite_diff_grad(lambda v: float(v[0] ** 2), np.array([3.0]))
    assert abs(g[0] - 6.0) < 1e-8


def test_finite_diff_of_sum_is_ones():
    x = np.random.default_rng(0).standard_normal((3, 4))
    npt.assert_allclose(finite_diff_grad(lambda v: float(v.sum()), x), np.ones((3, 4)), atol=1e-9)


def test_finite_diff_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda v: 0.0, np.zeros(1), h=0.0)


def test_finite_diff_matches_conv_backward(float64):
    rng = np.random.default_rng(1)
    layer = Conv2d(2, 3, 3, 1, 1, rng)
    x = rng.standard_normal((1, 2, 5, 5))
    proj = rng.standard_normal((1, 3, 5, 5))
    layer.forward(x)
    dx = layer.backward(proj)
    num = finite_diff_grad(lambda v: float(np.sum(layer.forward(v) * proj)), x)
    assert np.max(np.abs(dx - num) / (np.abs(dx) + np.abs(num) + 1e-12)) < 1e-5


def test_direct_conv_matches_layer(float64):
    rng = np.random.default_rng(2)
    for stride, padding in ((1, 1), (2, 0), (1, 0)):
        layer = Conv2d(3, 4, 3, stride, padding, rng)
        x = rng.standard_normal((2, 3, 7, 7))
        npt.assert_allclose(layer.forward(x), conv2d_direct(x, layer.params["weight"], layer.params["bias"],
                                                            stride, padding), rtol=1e-12, atol=1e-12)


def test_reference_shape_on_mnist_size():
    out = gp_pool_reference(np.zeros((1, 1, 28, 28)), gp.PolarGridSpec.uniform(math.pi / 36, 1.0))
    assert out.shape == (1, 1, 20, 72)


def test_reference_constant_input():
    spec = gp.PolarGridSpec.uniform(math.pi / 36, 1.0)
    out = gp_pool_reference(np.full((1, 1, 12, 12), 2.5), spec)
    occ = gp.occupancy(gp.plan_binning(12, 12, spec))
    npt.assert_array_equal(out[0, 0][occ], 2.5)


def test_uniform_rmse_closed_form():
    assert uniform_rmse_constant_predictor(-90, 90) == pytest.approx(90 / math.sqrt(3))
    assert uniform_rmse_constant_predictor(-90, 90) == pytest.approx(51.9615, abs=1e-4)
    assert uniform_rmse_constant_predictor(0, 0) == 0.0


def test_uniform_rmse_monte_carlo():
    draws = np.random.default_rng(3).uniform(-90, 90, 10**6)
    assert abs(np.sqrt(np.mean(draws ** 2)) - uniform_rmse_constant_predictor(-90, 90)) < 0.2


def test_uniform_rmse_rejects_inverted_range():
    with pytest.raises(ValueError):
        uniform_rmse_constant_predictor(1, 0)
