"""Discrete phi-total variation, phi-perimeter and the boundary-relaxed energy.

Cell sets are boolean arrays of the grid shape.  All sums are taken over the
domain mask only; cells outside the mask never contribute.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from leastgrad.grid import Grid, gradient

COAREA_MAX_LEVELS = 256
FLIP_MAX_CELLS = 20


class BudgetError(ValueError):
    """Raised when an enumeration or quantisation budget is exceeded."""


def cell_tv(grid: Grid, metric, u: np.ndarray) -> np.ndarray:
    """Per-cell contribution ``h^2 phi(x, grad u)`` (zero outside the mask)."""
    dens = metric.eval_field(gradient(grid, u))
    return np.where(grid.mask, dens, 0.0) * grid.h**2


def total_variation(grid: Grid, metric, u: np.ndarray) -> float:
    return float(np.sum(cell_tv(grid, metric, u)))


def perimeter(grid: Grid, metric, E: np.ndarray, A: np.ndarray | None = None) -> float:
    """phi-perimeter of ``E`` counted on faces whose owning cell lies in ``A``."""
    contrib = cell_tv(grid, metric, np.asarray(E, dtype=float))
    if A is not None:
        contrib = np.where(A, contrib, 0.0)
    return float(np.sum(contrib))


def boundary_weights(grid: Grid, metric) -> np.ndarray:
    """``phi(x_b, nu_b)`` for each boundary face, in enumeration order."""
    bf = grid.boundary_faces()
    w = np.empty(len(bf))
    for axis in (0, 1):
        sel = bf.axis == axis
        w[sel] = metric.axis_weight(axis)[bf.i[sel], bf.j[sel]]
    return w


def trace_penalty(grid: Grid, metric, u: np.ndarray, g: np.ndarray) -> float:
    bf = grid.boundary_faces()
    g = np.asarray(g, dtype=float)
    if g.shape != (len(bf),):
        raise ValueError(f"boundary data has {g.size} values, grid has {len(bf)} boundary faces")
    w = boundary_weights(grid, metric)
    return float(np.sum(w * np.abs(g - u[bf.i, bf.j])) * grid.h)


def relaxed_energy(grid: Grid, metric, u: np.ndarray, g: np.ndarray) -> float:
    """Interior phi-variation plus ``sum_b phi(x_b, nu_b) |g_b - u_b| h``."""
    return total_variation(grid, metric, u) + trace_penalty(grid, metric, u, g)


def threshold(grid: Grid, u: np.ndarray, lam: float) -> np.ndarray:
    return grid.mask & (np.asarray(u) >= lam)


def coarea_residual(grid: Grid, metric, u: np.ndarray,
                    max_levels: int = COAREA_MAX_LEVELS) -> float:
    """``|TV(u) - sum_k dt_k P(X_{t_k})|`` with ``X_t = {u > t}``.

    Thresholds are the midpoints between consecutive distinct values of
    ``u`` on the mask, so for a field with finitely many values the layer sum
    is the exact integral over ``t``.
    """
    vals = np.unique(np.asarray(u)[grid.mask])
    if vals.size > max_levels:
        raise BudgetError(f"field has {vals.size} distinct values, budget is {max_levels}; quantize first")
    tv = total_variation(grid, metric, u)
    layers = 0.0
    for lo, hi in zip(vals[:-1], vals[1:]):
        t = 0.5 * (lo + hi)
        layers += (hi - lo) * perimeter(grid, metric, grid.mask & (u > t))
    return abs(tv - layers)


def quantize(u: np.ndarray, levels: int) -> np.ndarray:
    """Round ``u`` onto ``levels`` equispaced values spanning its range."""
    lo, hi = float(np.min(u)), float(np.max(u))
    if hi == lo or levels < 2:
        return np.full_like(u, lo, dtype=float)
    step = (hi - lo) / (levels - 1)
    return lo + np.round((u - lo) / step) * step


def submodularity_margin(grid: Grid, metric, E1: np.ndarray, E2: np.ndarray) -> float:
    """``P(E1) + P(E2) - P(E1 | E2) - P(E1 & E2)``; nonnegative for these integrands."""
    E1 = np.asarray(E1, dtype=bool)
    E2 = np.asarray(E2, dtype=bool)
    return (perimeter(grid, metric, E1) + perimeter(grid, metric, E2)
            - perimeter(grid, metric, E1 | E2) - perimeter(grid, metric, E1 & E2))


def flip_audit(grid: Grid, metric, E: np.ndarray, fixed: np.ndarray, k: int,
               max_cells: int = FLIP_MAX_CELLS) -> float:
    """Smallest ``P(E') - P(E)`` over sets ``E'`` that differ from ``E`` in at most
    ``k`` non-fixed domain cells (the unmodified set is included, so the result
    is ``<= 0``; a local minimiser gives exactly 0).
    """
    E = np.asarray(E, dtype=bool) & grid.mask
    free = np.flatnonzero((grid.mask & ~np.asarray(fixed, dtype=bool)).ravel())
    if k >= 2 and free.size > max_cells:
        raise BudgetError(f"{free.size} flippable cells exceed the budget of {max_cells} for k={k}")
    base = perimeter(grid, metric, E)
    best = 0.0
    flat = E.ravel()
    for size in range(1, min(k, free.size) + 1):
        for combo in combinations(free.tolist(), size):
            trial = flat.copy()
            trial[list(combo)] ^= True
            diff = perimeter(grid, metric, trial.reshape(E.shape)) - base
            if diff < best:
                best = diff
    return best
