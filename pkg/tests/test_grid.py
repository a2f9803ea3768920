import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leastgrad.grid import Grid, GridError, divergence, gradient


def test_gradient_hand_values():
    g = Grid.box(3, 2, h=0.5)
    u = np.array([[0.0, 1.0], [2.0, 4.0], [3.0, 3.0]])
    d = gradient(g, u)
    # x faces: (u[i+1]-u[i])/h, last row has no +x face
    np.testing.assert_array_equal(d[0], [[4.0, 6.0], [2.0, -2.0], [0.0, 0.0]])
    np.testing.assert_array_equal(d[1], [[2.0, 0.0], [4.0, 0.0], [0.0, 0.0]])


def test_divergence_hand_values():
    g = Grid.box(2, 2, h=1.0)
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = 1.0  # flux from (0,0) to (1,0)
    d = divergence(g, p)
    np.testing.assert_array_equal(d, [[1.0, 0.0], [-1.0, 0.0]])


def test_gradient_never_crosses_mask():
    mask = np.ones((4, 4), dtype=bool)
    mask[3, :] = False
    g = Grid(4, 4, 0.25, mask=mask)
    u = np.arange(16.0).reshape(4, 4)
    d = gradient(g, u)
    assert np.all(d[0, 2, :] == 0.0)
    assert np.all(d[:, 3, :] == 0.0)


def test_linear_field_gradient_exact():
    g = Grid.box(8)
    x, y = g.centers
    d = gradient(g, 2.0 * x - 3.0 * y)
    np.testing.assert_allclose(d[0, :-1], 2.0, rtol=1e-12)
    np.testing.assert_allclose(d[1, :, :-1], -3.0, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nx=st.integers(2, 12), ny=st.integers(2, 12))
def test_adjointness_property(seed, nx, ny):
    rng = np.random.default_rng(seed)
    g = Grid.box(nx, ny, h=rng.uniform(0.1, 2.0))
    u = rng.normal(size=g.shape)
    p = rng.normal(size=(2,) + g.shape)
    lhs = g.inner(gradient(g, u), p)
    rhs = -g.inner(u, divergence(g, p))
    assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + abs(rhs) + 1e-300) + 1e-13


def test_adjointness_on_disk():
    rng = np.random.default_rng(4)
    g = Grid.disk(40, 0.4)
    u = g.masked(rng.normal(size=g.shape))
    p = rng.normal(size=(2,) + g.shape)
    lhs = g.inner(gradient(g, u), p)
    rhs = -g.inner(u, divergence(g, p))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_boundary_faces_box_count_and_order():
    g = Grid.box(3, 2)
    bf = g.boundary_faces()
    assert len(bf) == 2 * (3 + 2)
    # row-major cell order, then direction order -x, +x, -y, +y
    first = [(f.cell, f.normal) for f in list(bf)[:3]]
    assert first == [((0, 0), (-1, 0)), ((0, 0), (0, -1)), ((0, 1), (-1, 0))]
    assert np.all(bf.measure == g.h)


def test_boundary_face_centers():
    g = Grid.box(2, 2, h=1.0)
    c = g.boundary_faces().centers(g)
    np.testing.assert_allclose(c[0], [0.0, 0.5])
    np.testing.assert_allclose(c[1], [0.5, 0.0])


def test_disk_boundary_measure_close_to_staircase_perimeter():
    g = Grid.disk(128, 0.4)
    total = float(np.sum(g.boundary_faces().measure))
    # staircase perimeter of a disk tends to 8r, not 2 pi r
    assert abs(total - 8 * 0.4) < 0.05


@pytest.mark.parametrize(
    "kwargs, msg",
    [
        (dict(nx=1, ny=4, h=1.0), "nx, ny"),
        (dict(nx=4, ny=4, h=0.0), "spacing"),
        (dict(nx=4, ny=4, h=1.0, mask=np.zeros((4, 4), bool)), "no interior"),
        (dict(nx=4, ny=4, h=1.0, mask=np.ones((3, 4), bool)), "mask shape"),
    ],
)
def test_invalid_grids(kwargs, msg):
    with pytest.raises(GridError, match=msg):
        Grid(**kwargs)


def test_disconnected_mask_rejected():
    mask = np.zeros((5, 5), dtype=bool)
    mask[0, 0] = mask[4, 4] = True
    with pytest.raises(GridError, match="connected"):
        Grid(5, 5, 1.0, mask=mask)


def test_mask_is_read_only():
    g = Grid.box(4)
    with pytest.raises(ValueError):
        g.mask[0, 0] = False
