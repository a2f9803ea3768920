"""Barrier indicator ``-div phi_xi(x, Dd)`` on a band around a smooth boundary.

The domain is ``{f > 0}`` for a level-set function ``f``.  The signed distance
``d`` (positive inside) comes from first-order fast marching, replaced near
the boundary by the distance to a closest point found by Newton projection
onto ``{f = 0}``.  For the Euclidean integrand the indicator is the mean
curvature of the parallel curves; a positive value along the boundary is the
barrier condition.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import RectBivariateSpline

from leastgrad.grid import Grid

MIN_LEVELSET_GRADIENT = 0.5
PROJECTION_STEPS = 50


class LevelSetError(ValueError):
    pass


@dataclass
class LevelSet:
    """``value(x, y)`` (positive inside) and optionally ``grad(x, y) -> (fx, fy)``.

    Without ``grad`` the gradient is taken by central differences with step
    ``fd_step``.
    """

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    fd_step: float = 1e-6

    def gradient(self, x, y):
        if self.grad is not None:
            gx, gy = self.grad(x, y)
            return np.asarray(gx, dtype=float), np.asarray(gy, dtype=float)
        e = self.fd_step
        gx = (self.value(x + e, y) - self.value(x - e, y)) / (2 * e)
        gy = (self.value(x, y + e) - self.value(x, y - e)) / (2 * e)
        return gx, gy

    @classmethod
    def from_samples(cls, x: np.ndarray, y: np.ndarray, values: np.ndarray) -> "LevelSet":
        """Bicubic spline through samples on a tensor grid ``values[i, j] = f(x[i], y[j])``."""
        spl = RectBivariateSpline(x, y, values, kx=3, ky=3)

        def value(px, py):
            return spl.ev(px, py)

        def grad(px, py):
            return spl.ev(px, py, dx=1), spl.ev(px, py, dy=1)

        return cls(value, grad)

    @classmethod
    def disk(cls, radius: float = 1.0, center=(0.0, 0.0)) -> "LevelSet":
        cx, cy = center

        def value(x, y):
            # grouped so that 90 degree rotations of the grid map values exactly
            return 0.5 * (radius**2 - ((x - cx) ** 2 + (y - cy) ** 2)) / radius

        def grad(x, y):
            return -(x - cx) / radius, -(y - cy) / radius

        return cls(value, grad)

    @classmethod
    def cassini(cls, c: float = 1.0, b: float = 1.05) -> "LevelSet":
        """Interior of ``(x^2+y^2)^2 - 2c^2(x^2-y^2) = b^4 - c^4``: two lobes and a neck
        of half-width ``sqrt(b^2 - c^2)`` when ``b`` is slightly above ``c``."""
        if not b > c > 0:
            raise LevelSetError("cassini oval needs b > c > 0 to stay connected")

        def value(x, y):
            r2 = x * x + y * y
            return b**4 - c**4 - (r2 * r2 - 2 * c * c * (x * x - y * y))

        def grad(x, y):
            r2 = x * x + y * y
            return -(4 * x * r2 - 4 * c * c * x), -(4 * y * r2 + 4 * c * c * y)

        return cls(value, grad)


@dataclass
class BarrierResult:
    values: np.ndarray
    band: np.ndarray
    distance: np.ndarray
    minimum: float
    argmin: tuple[int, int]

    @property
    def satisfied(self) -> bool:
        return self.minimum > 0

    def band_values(self) -> list[tuple[int, int, float]]:
        ii, jj = np.nonzero(self.band)
        return [(int(i), int(j), float(self.values[i, j])) for i, j in zip(ii, jj)]


def fast_marching(init: np.ndarray, known: np.ndarray, h: float) -> np.ndarray:
    """First-order fast marching for ``|grad T| = 1`` from cells marked ``known``."""
    nx, ny = init.shape
    T = np.where(known, init, np.inf)
    done = known.copy()
    heap: list[tuple[float, int, int]] = []

    def update(i, j):
        tx = min(T[i - 1, j] if i > 0 else np.inf, T[i + 1, j] if i < nx - 1 else np.inf)
        ty = min(T[i, j - 1] if j > 0 else np.inf, T[i, j + 1] if j < ny - 1 else np.inf)
        a, b = sorted((tx, ty))
        if b - a >= h:
            return a + h
        return 0.5 * (a + b + np.sqrt(2 * h * h - (a - b) ** 2))

    for i, j in zip(*np.nonzero(known)):
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            p, q = i + di, j + dj
            if 0 <= p < nx and 0 <= q < ny and not done[p, q]:
                t = update(p, q)
                if t < T[p, q]:
                    T[p, q] = t
                    heapq.heappush(heap, (t, p, q))
    while heap:
        t, i, j = heapq.heappop(heap)
        if done[i, j] or t > T[i, j]:
            continue
        done[i, j] = True
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            p, q = i + di, j + dj
            if 0 <= p < nx and 0 <= q < ny and not done[p, q]:
                tn = update(p, q)
                if tn < T[p, q]:
                    T[p, q] = tn
                    heapq.heappush(heap, (tn, p, q))
    return T


def closest_points(ls: LevelSet, x: np.ndarray, y: np.ndarray, tol: float = 1e-13):
    """Closest points on ``{f = 0}`` by alternating Newton and orthogonality steps.

    Each iteration moves onto the linearised zero set and removes the
    tangential part of the offset to the query point.  Seeding from the query
    point keeps the result equivariant under grid symmetries.
    """
    px, py = x.copy(), y.copy()
    ok = np.zeros(x.shape, dtype=bool)
    for _ in range(PROJECTION_STEPS):
        f = ls.value(px, py)
        gx, gy = ls.gradient(px, py)
        g2 = gx * gx + gy * gy
        s = f / g2
        d1x, d1y = -s * gx, -s * gy
        ox, oy = x - px, y - py
        dot = (ox * gx + oy * gy) / g2
        d2x, d2y = ox - dot * gx, oy - dot * gy
        stepx, stepy = d1x + d2x, d1y + d2y
        px = px + stepx
        py = py + stepy
        ok = np.hypot(stepx, stepy) <= tol * (1.0 + np.hypot(px, py))
        if ok.all():
            break
    return px, py, ok


def signed_distance(grid: Grid, ls: LevelSet, band: float) -> np.ndarray:
    """Signed distance to ``{f = 0}`` on all cells, positive inside.

    Cells within ``band`` of the boundary get the closest-point distance;
    the rest keep the fast-marching value.
    """
    x, y = grid.centers
    h = grid.h
    F = np.asarray(ls.value(x, y), dtype=float)
    inside = F > 0
    front = np.zeros(grid.shape, dtype=bool)
    front[:-1] |= inside[:-1] != inside[1:]
    front[1:] |= inside[:-1] != inside[1:]
    front[:, :-1] |= inside[:, :-1] != inside[:, 1:]
    front[:, 1:] |= inside[:, :-1] != inside[:, 1:]
    if not front.any():
        raise LevelSetError("level set has no zero crossing on the grid")
    gx, gy = ls.gradient(x[front], y[front])
    gn = np.hypot(gx, gy)
    if gn.min() < MIN_LEVELSET_GRADIENT:
        raise LevelSetError(
            f"|grad f| = {gn.min():.3g} < {MIN_LEVELSET_GRADIENT} near the zero set; rescale the level set")
    init = np.zeros(grid.shape)
    init[front] = np.abs(F[front]) / gn
    T = fast_marching(init, front, h)
    d = np.where(inside, T, -T)
    near = np.abs(d) <= band
    px, py, ok = closest_points(ls, x[near], y[near])
    dist = np.hypot(x[near] - px, y[near] - py)
    sub = d[near]
    sub[ok] = np.where(inside[near][ok], dist[ok], -dist[ok])
    d[near] = sub
    return d


def barrier_indicator(grid: Grid, metric, ls: LevelSet, band_width: float | None = None) -> BarrierResult:
    """``-sum_i d/dx_i phi_xi_i(x, Dd)`` by central differences on the boundary band.

    ``metric`` lives on ``grid`` (a box covering the domain with a margin of
    a few cells); ``band_width`` defaults to ``2h``.
    """
    h = grid.h
    band_width = 2 * h if band_width is None else float(band_width)
    if band_width < 2 * h * (1 - 1e-12):
        raise LevelSetError(f"band_width {band_width:g} must be at least 2h = {2 * h:g}")
    d = signed_distance(grid, ls, band_width + 3 * h)
    Dd = np.zeros((2,) + grid.shape)
    Dd[0, 1:-1] = (d[2:] - d[:-2]) / (2 * h)
    Dd[1, :, 1:-1] = (d[:, 2:] - d[:, :-2]) / (2 * h)
    V = metric.grad_xi_field(Dd)
    ind = np.full(grid.shape, np.nan)
    ind[1:-1, 1:-1] = -((V[0, 2:, 1:-1] - V[0, :-2, 1:-1]) + (V[1, 1:-1, 2:] - V[1, 1:-1, :-2])) / (2 * h)
    band = np.abs(d) <= band_width
    band[[0, 1, -2, -1], :] = False
    band[:, [0, 1, -2, -1]] = False
    if not band.any():
        raise LevelSetError("boundary band is empty; enlarge the grid around the domain")
    vals = np.where(band, ind, np.inf)
    k = np.unravel_index(int(np.argmin(vals)), grid.shape)
    return BarrierResult(np.where(band, ind, np.nan), band, d, float(vals[k]), (int(k[0]), int(k[1])))


def box_around(ls_extent: float, h: float, margin_cells: int = 6) -> Grid:
    """Square box ``[-L, L]^2`` with ``L`` a multiple of ``h`` covering ``ls_extent`` plus a margin."""
    n_half = int(np.ceil(ls_extent / h)) + margin_cells
    return Grid(2 * n_half, 2 * n_half, h, (-n_half * h, -n_half * h))
