import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leastgrad.grid import Grid
from leastgrad.metric import Riemannian, WeightedIsotropic
from leastgrad.suites import random_cellset, random_metric, random_staircase
from leastgrad.tv import (BudgetError, coarea_residual, flip_audit, perimeter, quantize, relaxed_energy,
                          submodularity_margin, threshold, total_variation, trace_penalty)


def _ones(g):
    return WeightedIsotropic(np.ones(g.shape))


def test_square_perimeter():
    g = Grid.box(10)
    E = np.zeros(g.shape, dtype=bool)
    E[2:6, 3:7] = True
    # forward differences: cell (5, 6) carries both an x and a y jump
    assert perimeter(g, _ones(g), E) == pytest.approx((14 + np.sqrt(2)) * g.h, rel=1e-14)


def test_perimeter_restricted_to_owner_cells():
    g = Grid.box(6)
    E = np.zeros(g.shape, dtype=bool)
    E[:3] = True
    A = np.zeros(g.shape, dtype=bool)
    A[2, :3] = True
    # the interface faces are owned by the cells in column i = 2
    assert perimeter(g, _ones(g), E, A) == pytest.approx(3 * g.h)


def test_three_level_staircase_by_hand():
    g = Grid.box(12, 5)
    u = np.zeros(g.shape)
    u[4:8] = 1.5
    u[8:] = -0.5
    m = _ones(g)
    # jumps of 1.5 and 2.0 across full columns of height ny h
    hand = g.ny * g.h * (1.5 + 2.0)
    assert total_variation(g, m, u) == pytest.approx(hand, rel=1e-14)
    # layers: {u > -0.25} with height 0.5 and {u > 0.75} with height 1.5
    layers = 0.5 * perimeter(g, m, u > -0.25) + 1.5 * perimeter(g, m, u > 0.75)
    assert layers == pytest.approx(hand, rel=1e-14)
    assert coarea_residual(g, m, u) <= 1e-12


def test_two_valued_field_coarea_exact():
    g = Grid.disk(32, 0.4)
    E = np.zeros(g.shape, dtype=bool)
    E[5:20, 8:25] = True
    u = np.where(E, 3.0, 0.0)
    assert coarea_residual(g, WeightedIsotropic(np.linspace(1, 2, 32 * 32).reshape(32, 32)), u) == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(["isotropic", "riemannian"]))
def test_coarea_exact_on_axis_aligned_staircases(seed, kind):
    rng = np.random.default_rng(seed)
    g = Grid.box(20, 17)
    m = random_metric(g, rng, kind)
    u = random_staircase(g, rng)
    assert coarea_residual(g, m, u) <= 1e-12 * max(1.0, total_variation(g, m, u))


def test_quantized_smooth_field_coarea_behaviour():
    g = Grid.box(64)
    x, y = g.centers
    u = np.sin(3 * x) + np.cos(2 * y) * x
    m = _ones(g)
    tv = total_variation(g, m, u)
    errs = []
    for levels in (16, 32, 64, 128, 256):
        q = quantize(u, levels)
        r = coarea_residual(g, m, q)
        # the layer sum dominates and exceeds the variation by at most sqrt(2) - 1
        assert 0.0 <= r <= (np.sqrt(2) - 1) * total_variation(g, m, q) + 1e-12
        errs.append(abs(total_variation(g, m, q) - tv))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_coarea_budget():
    g = Grid.box(20)
    u = np.arange(400.0).reshape(20, 20)
    with pytest.raises(BudgetError):
        coarea_residual(g, _ones(g), u)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(["isotropic", "riemannian"]))
def test_submodularity_property(seed, kind):
    rng = np.random.default_rng(seed)
    g = Grid.box(9, 11)
    m = random_metric(g, rng, kind)
    E1, E2 = random_cellset(g, rng), random_cellset(g, rng)
    assert submodularity_margin(g, m, E1, E2) >= -1e-12


def test_submodularity_nested_sets_zero():
    g = Grid.box(10)
    m = _ones(g)
    E1 = np.zeros(g.shape, dtype=bool)
    E1[2:8, 2:8] = True
    E2 = np.zeros(g.shape, dtype=bool)
    E2[3:5, 3:5] = True
    assert submodularity_margin(g, m, E1, E2) == pytest.approx(0.0, abs=1e-14)


def test_flip_audit_half_plane_locally_minimal():
    g = Grid.box(8)
    E = np.zeros(g.shape, dtype=bool)
    E[:4] = True
    fixed = np.zeros(g.shape, dtype=bool)
    assert flip_audit(g, _ones(g), E, fixed, k=1) == 0.0


def test_flip_audit_finds_improvement():
    g = Grid.box(6)
    E = np.zeros(g.shape, dtype=bool)
    E[:3] = True
    E[4, 4] = True  # isolated cell: removing it shortens the perimeter
    gain = flip_audit(g, _ones(g), E, np.zeros(g.shape, dtype=bool), k=1)
    # its perimeter is two single jumps plus one diagonal cell
    assert gain == pytest.approx(-(2 + np.sqrt(2)) * g.h, rel=1e-14)


def test_flip_audit_two_flips_small_grid():
    g = Grid.box(4)
    E = np.zeros(g.shape, dtype=bool)
    E[:2] = True
    fixed = np.zeros(g.shape, dtype=bool)
    fixed[:, :2] = True  # 8 free cells
    assert flip_audit(g, _ones(g), E, fixed, k=2) == 0.0


def test_flip_audit_budget():
    g = Grid.box(6)
    with pytest.raises(BudgetError):
        flip_audit(g, _ones(g), np.zeros(g.shape, dtype=bool), np.zeros(g.shape, dtype=bool), k=2)


def test_trace_penalty_by_hand():
    g = Grid.box(2, 2, h=0.5)
    m = WeightedIsotropic(np.full(g.shape, 3.0))
    u = np.zeros(g.shape)
    gdata = np.ones(len(g.boundary_faces()))
    # eight faces of length 1/2, weight 3, jump 1
    assert trace_penalty(g, m, u, gdata) == pytest.approx(8 * 0.5 * 3.0)
    assert relaxed_energy(g, m, u, gdata) == pytest.approx(12.0)


def test_riemannian_boundary_weight_uses_axis_norm():
    g = Grid.box(2, 2, h=1.0)
    s = np.broadcast_to(np.array([[4.0, 0.0], [0.0, 9.0]]), (2, 2, 2, 2))
    m = Riemannian(np.ones(g.shape), s)
    u = np.zeros(g.shape)
    bf = g.boundary_faces()
    gdata = np.ones(len(bf))
    # four x-normal faces of weight 2 and four y-normal faces of weight 3
    assert trace_penalty(g, m, u, gdata) == pytest.approx(4 * 2.0 + 4 * 3.0)


def test_constant_field_energy_zero():
    g = Grid.disk(30, 0.4)
    u = np.full(g.shape, 0.7)
    gdata = np.full(len(g.boundary_faces()), 0.7)
    assert relaxed_energy(g, _ones(g), u, gdata) == 0.0


def test_threshold_respects_mask():
    g = Grid.disk(16, 0.3)
    u = np.ones(g.shape)
    assert np.array_equal(threshold(g, u, 0.5), g.mask)


def test_quantize_levels():
    q = quantize(np.linspace(0, 1, 101), 5)
    assert set(np.round(q, 12)) == {0.0, 0.25, 0.5, 0.75, 1.0}
