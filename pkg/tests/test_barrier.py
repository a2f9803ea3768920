import numpy as np
import pytest

from leastgrad.analysis.barrier import (LevelSet, LevelSetError, barrier_indicator, box_around, closest_points,
                                        fast_marching, signed_distance)
from leastgrad.metric import Riemannian, WeightedIsotropic


def _iso(grid, a=1.0):
    return WeightedIsotropic(np.full(grid.shape, a))


def test_fast_marching_straight_front():
    known = np.zeros((12, 5), dtype=bool)
    known[0] = True
    T = fast_marching(np.zeros((12, 5)), known, 0.5)
    np.testing.assert_allclose(T, 0.5 * np.arange(12)[:, None] * np.ones((1, 5)))


def test_closest_points_on_circle():
    ls = LevelSet.disk(1.0)
    x = np.array([0.3, -1.7, 0.0])
    y = np.array([0.4, 0.2, 0.9])
    px, py, ok = closest_points(ls, x, y)
    assert ok.all()
    np.testing.assert_allclose(np.hypot(px, py), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.arctan2(py, px), np.arctan2(y, x), atol=1e-12)


def test_signed_distance_of_disk():
    g = box_around(1.0, 1 / 32)
    d = signed_distance(g, LevelSet.disk(1.0), 5 / 32)
    x, y = g.centers
    exact = 1.0 - np.hypot(x, y)
    near = np.abs(exact) <= 5 / 32
    np.testing.assert_allclose(d[near], exact[near], atol=1e-12)
    # fast marching elsewhere, first order
    assert np.max(np.abs(d - exact)) < 0.1


def test_unit_disk_indicator_near_curvature():
    g = box_around(1.0, 1 / 128)
    res = barrier_indicator(g, _iso(g), LevelSet.disk(1.0))
    assert 0.95 <= res.minimum <= 1.05
    assert res.satisfied


def test_refinement_approaches_curvature():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = box_around(1.0, h)
        errs.append(abs(1.0 - barrier_indicator(g, _iso(g), LevelSet.disk(1.0)).minimum))
    assert errs[0] > errs[1] > errs[2]


def test_large_disk_tends_to_zero_from_above():
    mins = []
    for R in (2.0, 4.0, 8.0):
        g = box_around(R, 1 / 16)
        mins.append(barrier_indicator(g, _iso(g), LevelSet.disk(R)).minimum)
    assert all(m > 0 for m in mins)
    assert mins[0] > mins[1] > mins[2]
    assert mins[2] == pytest.approx(1 / 8, rel=0.05)


def test_rotation_symmetry_exact():
    g = box_around(1.0, 1 / 32)
    res = barrier_indicator(g, _iso(g), LevelSet.disk(1.0))
    vals = np.where(res.band, res.values, 0.0)
    assert np.array_equal(vals, np.rot90(vals))
    assert np.array_equal(res.band, np.rot90(res.band))


def test_weight_doubling_doubles_indicator():
    g = box_around(1.0, 1 / 32)
    r1 = barrier_indicator(g, _iso(g, 1.0), LevelSet.disk(1.0))
    r2 = barrier_indicator(g, _iso(g, 2.0), LevelSet.disk(1.0))
    np.testing.assert_array_equal(r2.values[r1.band], 2 * r1.values[r1.band])


def test_riemannian_identity_tensor_matches_isotropic():
    g = box_around(1.0, 1 / 32)
    s = np.broadcast_to(np.eye(2), g.shape + (2, 2))
    r1 = barrier_indicator(g, _iso(g), LevelSet.disk(1.0))
    r2 = barrier_indicator(g, Riemannian(np.ones(g.shape), s), LevelSet.disk(1.0))
    np.testing.assert_allclose(r2.values[r1.band], r1.values[r1.band], rtol=1e-10, atol=1e-10)


def test_cassini_neck_is_negative():
    g = box_around(1.5, 1 / 64)
    res = barrier_indicator(g, _iso(g), LevelSet.cassini())
    assert not res.satisfied
    x, y = g.centers
    i, j = res.argmin
    # the most negative cell sits at the neck, not on a lobe
    assert abs(x[i, j]) < 0.2 and 0.1 < abs(y[i, j]) < 0.5


def test_cassini_parameters_checked():
    with pytest.raises(LevelSetError):
        LevelSet.cassini(c=1.0, b=0.9)


def test_flat_levelset_rejected():
    g = box_around(1.0, 1 / 32)
    ls = LevelSet(lambda x, y: 0.01 * (1 - x * x - y * y))
    with pytest.raises(LevelSetError, match="grad f"):
        barrier_indicator(g, _iso(g), ls)


def test_narrow_band_rejected():
    g = box_around(1.0, 1 / 32)
    with pytest.raises(LevelSetError, match="band_width"):
        barrier_indicator(g, _iso(g), LevelSet.disk(1.0), band_width=1 / 32)


def test_no_zero_crossing_rejected():
    g = box_around(1.0, 1 / 16)
    with pytest.raises(LevelSetError, match="zero crossing"):
        signed_distance(g, LevelSet.disk(10.0), 0.2)


def test_sampled_levelset_matches_analytic():
    g = box_around(1.0, 1 / 32)
    xs = np.linspace(-1.5, 1.5, 121)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    ls = LevelSet.from_samples(xs, xs, 0.5 * (1 - (X**2 + Y**2)))
    ref = barrier_indicator(g, _iso(g), LevelSet.disk(1.0)).minimum
    assert barrier_indicator(g, _iso(g), ls).minimum == pytest.approx(ref, abs=1e-9)


def test_finite_difference_gradient_fallback():
    ls = LevelSet(lambda x, y: 1 - x * x - 2 * y * y)
    gx, gy = ls.gradient(np.array(0.3), np.array(-0.2))
    assert gx == pytest.approx(-0.6, abs=1e-8) and gy == pytest.approx(0.8, abs=1e-8)
