import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import gaussian_filter

from r2n import gp_pooling as gp
from r2n.tensor_core import ShapeError
from r2n.warp import rotate_image

from oracles import gp_pool_reference

SPEC_5DEG = gp.PolarGridSpec.uniform(math.pi / 36, 1.0)


def pool(x, spec):
    return gp.gp_pool_forward(x, gp.plan_binning(x.shape[2], x.shape[3], spec))


@pytest.mark.parametrize("size, spec, expected", [
    (28, SPEC_5DEG, (20, 72)),
    (28, gp.PolarGridSpec.uniform(math.pi / 36, 2.0), (10, 72)),
    (14, gp.PolarGridSpec.uniform(math.pi / 36, 2.0), (5, 72)),
    (28, gp.PolarGridSpec.uniform(math.pi / 4, 1.0), (20, 8)),
    (28, gp.PolarGridSpec.uniform(math.pi / 180, 1.0), (20, 360)),
    (28, gp.PolarGridSpec.uniform(math.pi / 36, math.hypot(14, 14)), (1, 72)),
])
def test_output_shape(size, spec, expected):
    out, sw = pool(np.zeros((1, 1, size, size)), spec)
    assert out.shape[2:] == expected
    assert sw.shape == out.shape
    assert gp.GPPool(spec).output_shape(size, size) == expected


def test_overlapping_and_padded_cell_counts():
    spec = gp.PolarGridSpec(math.pi / 18, math.pi / 36, math.pi / 36, 2.0, 1.0, 1.0)
    b = gp.plan_binning(28, 28, spec)
    # angular: (2pi + 2*pad - k)/s + 1 = (72 + 2 - 2) + 1
    assert b.n_angular == 73
    # radial: ceil(19.799 + 2 - 2) + 1
    assert b.n_radial == 21


@pytest.mark.parametrize("spec", [SPEC_5DEG, gp.PolarGridSpec.uniform(math.pi / 4, 3.0),
                                  gp.PolarGridSpec.uniform(math.pi / 180, 1.0)])
def test_non_overlapping_spec_partitions_the_pixels(spec):
    b = gp.plan_binning(28, 28, spec)
    counts = np.bincount(b.pair_pixel, minlength=28 * 28)
    npt.assert_array_equal(counts, np.ones(28 * 28, int))


def test_membership_follows_the_polar_convention():
    b = gp.plan_binning(28, 28, SPEC_5DEG)
    # pixel (col 20, row 14) sits at x_n = 6, y_n = 0: radius 6, angle 0 -> cell 36 (starts at 0 rad)
    assert 14 * 28 + 20 in b.members(6 * 72 + 36)
    # (col 14, row 8): x_n = 0, y_n = 6 -> angle pi/2 = 54 strides of 5 deg past -pi
    assert 8 * 28 + 14 in b.members(6 * 72 + 54)
    # the centre pixel has r = 0 and phi = 0
    assert 14 * 28 + 14 in b.members(0 * 72 + 36)
    # the corner pixel (0, 0) is at r_max, inside the closed outermost ring
    assert 0 in b.pair_pixel[b.pair_cell // 72 == 19]


def test_to_polar_matches_vectorised_coordinates():
    r, phi = gp.polar_coordinates(6, 8)
    for row in range(6):
        for col in range(8):
            rr, pp = gp.to_polar(col, row, 8, 6)
            assert rr == r[row * 8 + col]
            # numpy and libm atan2 may differ in the last bit
            assert pp == pytest.approx(phi[row * 8 + col], rel=1e-15, abs=1e-15)
    assert np.all((phi > -math.pi) & (phi <= math.pi))


def test_constant_input_gives_constant_nonempty_cells():
    out, sw = pool(np.full((1, 2, 28, 28), 0.7), SPEC_5DEG)
    occ = gp.occupancy(gp.plan_binning(28, 28, SPEC_5DEG))
    npt.assert_array_equal(out[:, :, occ], 0.7)
    npt.assert_array_equal(out[:, :, ~occ], 0.0)
    assert np.all(sw[:, :, ~occ] == gp.EMPTY)
    assert occ.sum() == 691


def test_switches_point_at_the_max_and_ties_take_the_first_pixel():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 12, 12))
    out, sw = pool(x, SPEC_5DEG)
    flat = x.reshape(2, 3, -1)
    valid = sw != gp.EMPTY
    picked = np.take_along_axis(flat, np.where(valid, sw, 0).reshape(2, 3, -1), axis=2).reshape(out.shape)
    npt.assert_array_equal(picked[valid], out[valid])

    b = gp.plan_binning(12, 12, SPEC_5DEG)
    big = b.nonempty[np.argmax([len(b.members(c)) for c in b.nonempty])]
    tied = np.zeros((1, 1, 12, 12))
    tied.reshape(-1)[b.members(big)] = 1.0
    _, sw = pool(tied, SPEC_5DEG)
    assert sw.reshape(-1)[big] == b.members(big).min()


def test_backward_routes_gradient_to_switches_only():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 2, 12, 12))
    layer = gp.GPPool(SPEC_5DEG)
    out = layer(x)
    g = rng.standard_normal(out.shape)
    dx = layer.backward(g)
    valid = layer.switches != gp.EMPTY
    npt.assert_allclose(dx.sum(axis=(2, 3)), (g * valid).sum(axis=(2, 3)))
    for n in range(2):
        for c in range(2):
            winners = set(layer.switches[n, c][valid[n, c]].tolist())
            nz = set(np.flatnonzero(dx[n, c]).tolist())
            assert nz <= winners


def test_overlapping_cells_accumulate_on_shared_winner():
    spec = gp.PolarGridSpec(math.pi / 2, math.pi / 4, 0.0, 20.0, 20.0, 0.0)
    x = np.zeros((1, 1, 8, 8))
    x[0, 0, 1, 6] = 5.0  # x_n = 2, y_n = 3: 5.25 strides past -pi
    out, sw = pool(x, spec)
    assert out.shape[-1] == 7
    dx = gp.gp_pool_backward(np.ones_like(out), sw, x.shape)
    # quarter-turn cells at eighth-turn stride: cells 4 and 5 both contain it
    assert dx[0, 0, 1, 6] == 2.0


def test_shape_errors():
    b = gp.plan_binning(12, 12, SPEC_5DEG)
    with pytest.raises(ShapeError):
        gp.gp_pool_forward(np.zeros((1, 1, 10, 12)), b)
    out, sw = gp.gp_pool_forward(np.zeros((1, 1, 12, 12)), b)
    with pytest.raises(ShapeError):
        gp.gp_pool_backward(out[:, :, :-1], sw, (1, 1, 12, 12))


@pytest.mark.parametrize("kwargs", [
    dict(angular_kernel=0.0, angular_stride=0.1),
    dict(angular_kernel=0.1, angular_stride=0.1, radial_kernel=-1.0),
    dict(angular_kernel=0.1, angular_stride=0.1, angular_padding=-0.1),
    dict(angular_kernel=7.0, angular_stride=0.1),
])
def test_invalid_specs_are_rejected(kwargs):
    with pytest.raises(ValueError):
        gp.PolarGridSpec(**kwargs)


@pytest.mark.parametrize("spec", [SPEC_5DEG, gp.PolarGridSpec.uniform(math.pi / 4, 2.0),
                                  gp.PolarGridSpec(math.pi / 6, math.pi / 12, 0.1, 2.0, 1.5, 0.5)])
def test_fast_path_equals_reference_exactly(spec):
    x = np.random.default_rng(2).standard_normal((6, 1, 12, 12))
    x[0, 0, 3:7, 3:7] = 1.0  # ties
    out, _ = pool(x, spec)
    npt.assert_array_equal(out, gp_pool_reference(x, spec))


@settings(max_examples=25, deadline=None)
@given(ang_k=st.floats(0.2, 2.0), ang_ratio=st.floats(0.4, 1.0), ang_pad=st.floats(0.0, 0.3),
       rad_k=st.floats(0.7, 4.0), rad_ratio=st.floats(0.4, 1.0), rad_pad=st.floats(0.0, 1.0),
       seed=st.integers(0, 2**31 - 1))
def test_fast_path_equals_reference_for_random_specs(ang_k, ang_ratio, ang_pad, rad_k, rad_ratio, rad_pad, seed):
    spec = gp.PolarGridSpec(ang_k, ang_k * ang_ratio, ang_pad, rad_k, rad_k * rad_ratio, rad_pad)
    x = np.random.default_rng(seed).standard_normal((2, 1, 8, 9))
    out, _ = pool(x, spec)
    npt.assert_array_equal(out, gp_pool_reference(x, spec))


def _disk(size, radius):
    yy, xx = np.mgrid[0:size, 0:size]
    return np.hypot(xx - size / 2, size / 2 - yy) <= radius


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), quarter=st.sampled_from([1, 2, 3]))
def test_quarter_turn_is_an_exact_circular_shift(seed, quarter):
    img = np.random.default_rng(seed).random((28, 28)) * _disk(28, 12)
    rotated = rotate_image(img, quarter * math.pi / 2)
    base, _ = pool(img[None, None], SPEC_5DEG)
    turned, _ = pool(rotated[None, None], SPEC_5DEG)
    # ring 0 holds only the centre pixel, whose angle is pinned to 0
    npt.assert_array_equal(np.roll(base, 18 * quarter, axis=-1)[..., 1:, :], turned[..., 1:, :])


def test_small_rotation_shows_up_as_angular_shift():
    b = gp.plan_binning(28, 28, SPEC_5DEG)
    rings = gp.comparable_rings(b)
    valid = gp.occupancy(b)[rings]
    hits = 0
    for seed in range(20):
        img = gaussian_filter(np.random.default_rng(seed).random((28, 28)), 1.0)
        base, _ = pool(img[None, None], SPEC_5DEG)
        rot, _ = pool(rotate_image(img, math.radians(10))[None, None], SPEC_5DEG)
        hits += gp.angular_shift(base[0, 0][rings], rot[0, 0][rings], valid) == 2
    assert hits >= 18


def test_comparable_rings_lie_inside_the_inscribed_disk():
    b = gp.plan_binning(28, 28, SPEC_5DEG)
    rings = gp.comparable_rings(b)
    assert rings.max() + 1 <= 14
    assert np.all(gp.occupancy(b)[rings].mean(axis=1) >= 0.5)


def test_angular_shift_recovers_a_roll():
    a = np.random.default_rng(3).random((4, 72))
    for s in (0, 1, 5, 71):
        assert gp.angular_shift(a, np.roll(a, s, axis=-1)) == s
