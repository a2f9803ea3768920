import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from leastgrad.analysis.counterexample import (CounterexampleSpec, ResolutionError, bump, calibration_defect,
                                               calibration_residual, common_trace, counterexample_family,
                                               counterexample_fields, counterexample_grid, frame_current,
                                               frame_metric, nonuniqueness_demo, physical_centers)
from leastgrad.tv import relaxed_energy

SPEC = CounterexampleSpec()


@pytest.fixture(scope="module")
def frame128():
    g = counterexample_grid(SPEC, 128)
    a, J = counterexample_fields(SPEC, g)
    return g, a, J, frame_metric(SPEC, g, a), frame_current(SPEC, g, J)


def test_bump_profile():
    np.testing.assert_array_equal(bump([0.0, 0.3, 0.5, 0.75, 1.0, 2.0, 2.5, 3.0]),
                                  [0, 0, 1, 1, 1, -1, -1, -1])
    r = np.linspace(0, 3, 3001)
    assert np.all(np.abs(np.diff(bump(r))) < 0.02)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-1 / 3, 1 / 3), z=st.floats(-1.0, 1.0))
def test_current_is_vertical_near_axis(x, z):
    J = SPEC.current(np.array(x), np.array(z))
    assert J[0] == 0.0 and J[1] == 1.0


@settings(max_examples=50, deadline=None)
@given(r=st.floats(0.5, 1.0), z=st.floats(1e-6, 1.0), side=st.sampled_from([-1.0, 1.0]))
def test_current_magnitude_on_plateau(r, z, side):
    J = SPEC.current(np.array(side * r), np.array(z))
    assert J[0] ** 2 + J[1] ** 2 == pytest.approx(1 + z ** (2 * SPEC.theta), rel=1e-12)


def test_current_matches_stream_function_differences():
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, 200)
    z = rng.uniform(0.05, 1.0, 200) * rng.choice([-1, 1], 200)
    d = 1e-6
    r = np.abs(x)
    pz = (SPEC.psi(r, z + d) - SPEC.psi(r, z - d)) / (2 * d)
    pr = (SPEC.psi(r + d, z) - SPEC.psi(r - d, z)) / (2 * d)
    J = SPEC.current(x, z)
    np.testing.assert_allclose(J[0], -np.sign(x) * pz, atol=1e-7)
    np.testing.assert_allclose(J[1], pr, atol=1e-7)


def test_weight_positive(frame128):
    g, a, _, _, _ = frame128
    assert a.min() > 0.0


def test_divergence_free_away_from_axis():
    maxima = []
    for n in (200, 400, 800):
        x = np.linspace(-3, 3, n + 1)
        z = np.linspace(0.05, 0.5, n // 4 + 1)
        X, Z = np.meshgrid(x, z, indexing="ij")
        J = SPEC.current(X, Z)
        div = ((J[0][2:, 1:-1] - J[0][:-2, 1:-1]) / (2 * (x[1] - x[0]))
               + (J[1][1:-1, 2:] - J[1][1:-1, :-2]) / (2 * (z[1] - z[0])))
        maxima.append(np.abs(div).max())
    for a, b in zip(maxima, maxima[1:]):
        assert a / b >= 1.8


def test_fan_edge_closed_form_and_continuity():
    assert SPEC.zeta2(3.0) == pytest.approx(0.00390625, rel=1e-14)
    r = np.linspace(2.0, 3.0, 101)
    z = SPEC.zeta2(r)
    fan = z ** (1 - SPEC.theta) / (1 - SPEC.theta) - r + 3.0
    np.testing.assert_allclose(fan, 1.0, atol=1e-12)


def test_lens_edge_continuation_is_fourth_order():
    z0 = float(SPEC.zeta1_closed(0.5))
    ref = solve_ivp(lambda r, z: SPEC.interface_slope(r, z), (0.5, 0.0), [z0], method="DOP853",
                    rtol=1e-13, atol=1e-20).y[0, -1]
    spec = CounterexampleSpec()
    errs = [abs(spec.zeta1_table(s)[1][0] - ref) for s in (0.025, 0.0125, 0.00625, 0.003125)]
    for a, b in zip(errs, errs[1:]):
        assert 8.0 <= a / b <= 32.0


def test_lens_edge_closed_form_branch():
    r = np.array([0.5, 0.75, 1.0])
    np.testing.assert_allclose(SPEC.zeta1(r, 0.01), (0.25 * np.array([0.5, 0.25, 0.0])) ** 4, rtol=1e-14)


def test_family_differs_exactly_on_lens():
    g = counterexample_grid(SPEC, 128)
    u0 = counterexample_family(SPEC, 0.0, g)
    u1 = counterexample_family(SPEC, 1.0, g)
    x, z = physical_centers(SPEC, g)
    lens = SPEC.lens_mask(x, z, SPEC.step_fraction * g.h)
    assert lens.any()
    np.testing.assert_array_equal(u0 != u1, lens)
    assert np.all(u0[lens] == 0.0) and np.all(u1[lens] == 1.0)


@pytest.mark.parametrize("sigma", [-0.1, 1.5])
def test_family_rejects_sigma(sigma):
    g = counterexample_grid(SPEC, 64)
    with pytest.raises(ValueError, match="sigma"):
        counterexample_family(SPEC, sigma, g)


def test_spec_validation():
    with pytest.raises(ValueError, match="theta"):
        CounterexampleSpec(theta=0.3)
    with pytest.raises(ValueError, match="margin"):
        CounterexampleSpec(margin=0.0)


def test_coarse_grid_rejected():
    with pytest.raises(ResolutionError):
        counterexample_fields(SPEC, counterexample_grid(SPEC, 32))


def test_family_shares_trace(frame128):
    g = frame128[0]
    bf = g.boundary_faces()
    trace = common_trace(SPEC, g)
    for sigma in (0.0, 0.3, 1.0):
        u = counterexample_family(SPEC, sigma, g)
        assert np.array_equal(u[bf.i, bf.j], counterexample_family(SPEC, 0.0, g)[bf.i, bf.j])
    assert np.isfinite(trace).all()


def test_constant_field_residual_zero(frame128):
    g, _, _, m, Jf = frame128
    assert calibration_residual(g, m, Jf, np.full(g.shape, 2.0)) == 0.0


def test_calibration_defect_nonnegative(frame128):
    # phi0(J) = 1 pointwise, so the cellwise pairing never exceeds phi
    g, _, _, m, Jf = frame128
    for sigma in (0.0, 0.5, 1.0):
        d = calibration_defect(g, m, Jf, counterexample_family(SPEC, sigma, g))
        assert d.min() >= -1e-12


def test_calibration_residual_small_and_control(frame128):
    g, _, J, m, Jf = frame128
    u = counterexample_family(SPEC, 0.5, g)
    assert calibration_residual(g, m, Jf, u) <= 0.05
    rotated = frame_current(SPEC, g, np.stack([-J[1], J[0]]))
    assert calibration_residual(g, m, rotated, u) >= 0.5


def test_objectives_agree_and_control_splits(frame128):
    g = frame128[0]
    table = nonuniqueness_demo(SPEC, g, (0.0, 0.5, 1.0), solve=False)
    assert table.spread <= table.tolerance
    assert table.control_gap > 5 * table.tolerance
    assert table.solver_objective is None


def test_objective_bitwise_rerun(frame128):
    g, _, _, m, _ = frame128
    u = counterexample_family(SPEC, 0.0, g)
    e1 = relaxed_energy(g, m, u, common_trace(SPEC, g))
    spec2 = CounterexampleSpec()
    g2 = counterexample_grid(spec2, 128)
    a2, _ = counterexample_fields(spec2, g2)
    e2 = relaxed_energy(g2, frame_metric(spec2, g2, a2), counterexample_family(spec2, 0.0, g2),
                        common_trace(spec2, g2))
    assert e1 == e2
