"""Primal-dual solver for the boundary-relaxed least gradient problem.

Minimises over cell fields ``u`` with ``min g <= u <= max g``

    I(u) = sum_cells h^2 phi(x, grad u) + sum_faces h phi(x_b, nu_b) |u_b - g_b|

by a Chambolle-Pock iteration on the saddle form
``min_u max_Y <grad u, Y> + G(u)`` where ``Y`` ranges over fields with
``phi0(x, Y) <= 1`` and ``G`` is the trace term plus the box indicator.
Every ``check_every`` iterations the primal value of the current iterate and
the dual value of the current (feasible) ``Y`` are computed; the best of
each gives a certified gap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from leastgrad.grid import Grid, divergence, gradient
from leastgrad.metric import project_face_restricted
from leastgrad.tv import boundary_weights, relaxed_energy

log = logging.getLogger(__name__)


class SolverConfigError(ValueError):
    pass


@dataclass
class SolverConfig:
    max_iters: int = 20000
    tol: float = 1e-5
    tau: float | None = None
    s: float | None = None
    theta_relax: float = 1.0
    check_every: int = 10
    init: object = "extension"
    seed: int = 0

    def steps(self, grid: Grid) -> tuple[float, float]:
        """Validated ``(tau, s)``; defaults are ``h / sqrt(8)`` each."""
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters > 0):
            raise SolverConfigError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if not self.tol > 0:
            raise SolverConfigError(f"tol must be positive, got {self.tol!r}")
        if not 0 <= self.theta_relax <= 1:
            raise SolverConfigError(f"theta_relax must lie in [0, 1], got {self.theta_relax!r}")
        if not (isinstance(self.check_every, (int, np.integer)) and self.check_every > 0):
            raise SolverConfigError(f"check_every must be a positive integer, got {self.check_every!r}")
        default = grid.h / math.sqrt(8.0)
        tau = default if self.tau is None else float(self.tau)
        s = default if self.s is None else float(self.s)
        if tau <= 0 or s <= 0:
            raise SolverConfigError("step sizes must be positive")
        L2 = 8.0 / grid.h**2
        if tau * s * L2 > 1.0 + 1e-12:
            raise SolverConfigError(f"tau*s*L^2 = {tau * s * L2:.6g} exceeds 1")
        return tau, s

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("max_iters", "tol", "tau", "s", "theta_relax", "check_every", "seed")}
        d["init"] = self.init if isinstance(self.init, str) else "array"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {"max_iters", "tol", "tau", "s", "theta_relax", "check_every", "init", "seed"}
        unknown = set(d) - known
        if unknown:
            raise SolverConfigError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SolveReport:
    iterations: int
    gap: float
    objective: float
    dual_value: float
    converged: bool
    boundary_mismatch: float
    history: list[tuple[int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "gap": self.gap,
            "objective": self.objective,
            "dual_value": self.dual_value,
            "converged": self.converged,
            "boundary_mismatch": self.boundary_mismatch,
            "history": [[int(k), float(v)] for k, v in self.history],
        }


class TraceProx:
    """Exact prox of ``tau * G`` and the cellwise conjugate terms of ``G``.

    A cell may own up to four boundary faces; its trace term is
    ``h sum_k w_k |u - g_k|``.  Face data are padded to width four with zero
    weights.
    """

    def __init__(self, grid: Grid, metric, g: np.ndarray):
        bf = grid.boundary_faces()
        g = np.asarray(g, dtype=float)
        if g.shape != (len(bf),):
            raise ValueError(f"boundary data has {g.size} values, grid has {len(bf)} boundary faces")
        if not np.all(np.isfinite(g)):
            raise ValueError("boundary data must be finite")
        self.grid = grid
        self.g = g
        self.lo = float(g.min())
        self.hi = float(g.max())
        w = boundary_weights(grid, metric)
        flat = bf.i * grid.ny + bf.j
        cells, inv = np.unique(flat, return_inverse=True)
        slot = np.zeros(len(bf), dtype=int)
        seen: dict[int, int] = {}
        for n, c in enumerate(inv):
            slot[n] = seen.get(c, 0)
            seen[c] = slot[n] + 1
        # pad slots carry the first face's value with zero weight
        first = np.zeros(cells.size, dtype=int)
        first[inv[::-1]] = np.arange(len(bf))[::-1]
        G = np.repeat(g[first][:, None], 4, axis=1)
        W = np.zeros((cells.size, 4))
        G[inv, slot] = g
        W[inv, slot] = w
        order = np.argsort(G, axis=1, kind="stable")
        self.cells = cells
        self.G = np.take_along_axis(G, order, axis=1)
        self.W = np.take_along_axis(W, order, axis=1)
        self.h = grid.h

    def prox(self, v: np.ndarray, tau: float, clamp: bool = True) -> np.ndarray:
        """``argmin_u G(u) + |u - v|^2_{h^2} / (2 tau)``, cellwise."""
        out = v.copy()
        flat = out.reshape(-1)
        vb = flat[self.cells]
        t = self.W * (tau / self.h)
        G = self.G
        K = G.shape[1]
        csum = np.concatenate([np.zeros((t.shape[0], 1)), np.cumsum(t, axis=1)], axis=1)
        total = csum[:, -1:]
        best_u = None
        best_f = None
        for m in range(K + 1):
            below = csum[:, m]
            above = total[:, 0] - below
            cand = vb - (below - above)
            if m > 0:
                cand = np.maximum(cand, G[:, m - 1])
            if m < K:
                cand = np.minimum(cand, G[:, m])
            f = np.sum(t * np.abs(cand[:, None] - G), axis=1) + 0.5 * (cand - vb) ** 2
            if best_u is None:
                best_u, best_f = cand, f
            else:
                better = f < best_f
                best_u = np.where(better, cand, best_u)
                best_f = np.where(better, f, best_f)
        flat[self.cells] = best_u
        if clamp:
            np.clip(out, self.lo, self.hi, out=out)
        return out

    def dual_value(self, d: np.ndarray, mask: np.ndarray) -> float:
        """``min_{lo <= u <= hi} sum_c [-h^2 d_c u_c + trace_c(u_c)]`` for ``d = div Y``."""
        h2 = self.h**2
        lin = np.where(mask, -h2 * d, 0.0)
        flat = lin.reshape(-1)
        others = np.ones(flat.size, dtype=bool)
        others[self.cells] = False
        val = float(np.sum(np.minimum(flat[others] * self.lo, flat[others] * self.hi)))
        c = flat[self.cells]
        cand = np.concatenate(
            [np.full((c.size, 1), self.lo), np.full((c.size, 1), self.hi), np.clip(self.G, self.lo, self.hi)],
            axis=1,
        )
        trace = self.h * np.sum(self.W[:, None, :] * np.abs(cand[:, :, None] - self.G[:, None, :]), axis=2)
        val += float(np.sum(np.min(c[:, None] * cand + trace, axis=1)))
        return val


def extension(grid: Grid, g: np.ndarray) -> np.ndarray:
    """Extend face data inward: each cell takes the mean trace of its nearest boundary-owning cell."""
    bf = grid.boundary_faces()
    acc = np.zeros(grid.shape)
    cnt = np.zeros(grid.shape)
    np.add.at(acc, (bf.i, bf.j), g)
    np.add.at(cnt, (bf.i, bf.j), 1.0)
    owner = cnt > 0
    _, (ii, jj) = ndimage.distance_transform_edt(~owner, return_indices=True)
    ext = acc[ii, jj] / cnt[ii, jj]
    return np.where(grid.mask, ext, 0.0)


def initial_field(grid: Grid, g: np.ndarray, init, seed: int = 0) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if isinstance(init, str):
        if init == "extension":
            u = extension(grid, g)
        elif init == "zero":
            u = np.zeros(grid.shape)
        elif init == "random":
            rng = np.random.default_rng(seed)
            u = rng.uniform(g.min(), g.max(), grid.shape)
        else:
            raise SolverConfigError(f"unknown init {init!r}; use extension, zero, random or an array")
    else:
        u = np.array(init, dtype=float)
        if u.shape != grid.shape:
            raise SolverConfigError(f"initial field shape {u.shape} != grid shape {grid.shape}")
    return np.where(grid.mask, np.clip(u, g.min(), g.max()), 0.0)


def solve_least_gradient(grid: Grid, metric, g: np.ndarray,
                         cfg: SolverConfig | None = None) -> tuple[np.ndarray, SolveReport]:
    """Least gradient minimiser with Dirichlet data ``g`` on the boundary faces.

    Returns the best primal iterate found and a :class:`SolveReport`.  The
    run stops once ``(P - D) <= tol (1 + |P|)`` where ``P`` is the best primal
    value and ``D`` the best dual lower bound seen at the checkpoints.
    """
    cfg = SolverConfig() if cfg is None else cfg
    tau, s = cfg.steps(grid)
    if metric.shape != grid.shape:
        raise ValueError(f"metric shape {metric.shape} != grid shape {grid.shape}")
    tp = TraceProx(grid, metric, g)
    mask = grid.mask
    fm = grid.face_mask
    theta = cfg.theta_relax

    u = initial_field(grid, g, cfg.init, cfg.seed)
    ubar = u.copy()
    Y = np.zeros((2,) + grid.shape)

    best_p = math.inf
    best_u = u.copy()
    best_d = -math.inf
    history: list[tuple[int, float]] = []
    gap = math.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        Y = project_face_restricted(metric, Y + s * gradient(grid, ubar), fm)
        u_prev = u
        u = tp.prox(u + tau * divergence(grid, Y), tau)
        u[~mask] = 0.0
        ubar = u + theta * (u - u_prev)
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            p = relaxed_energy(grid, metric, u, tp.g)
            if p < best_p:
                best_p = p
                best_u = u.copy()
            best_d = max(best_d, tp.dual_value(divergence(grid, Y), mask))
            history.append((it, best_p))
            gap = (best_p - best_d) / (1.0 + abs(best_p))
            if gap <= cfg.tol:
                converged = True
                break
    bf = grid.boundary_faces()
    mismatch = float(np.max(np.abs(best_u[bf.i, bf.j] - tp.g)))
    report = SolveReport(it, float(gap), float(best_p), float(best_d), converged, mismatch, history)
    if not converged:
        log.warning("least gradient solve stopped at max_iters=%d with relative gap %.3e", it, gap)
    return best_u, report


def comparison_probe(grid: Grid, metric, g1: np.ndarray, g2: np.ndarray,
                     cfg: SolverConfig | None = None) -> tuple[float, float]:
    """Solve with ``g1`` and ``g2`` under one config and measure the two margins.

    Returns ``(max(u1 - u2), max|u1 - u2| - max|g1 - g2|)`` over domain cells.
    For ``g1 <= g2`` both are ``<= 0`` for exact minimisers.
    """
    u1, _ = solve_least_gradient(grid, metric, g1, cfg)
    u2, _ = solve_least_gradient(grid, metric, g2, cfg)
    m = grid.mask
    diff = (u1 - u2)[m]
    gap = float(np.max(np.abs(np.asarray(g1, dtype=float) - np.asarray(g2, dtype=float))))
    return float(np.max(diff)), float(np.max(np.abs(diff)) - gap)


@dataclass
class MultistartResult:
    max_distance: float
    objectives: list[float]
    solutions: list[np.ndarray] = field(repr=False)
    reports: list[SolveReport] = field(repr=False)

    @property
    def objective_spread(self) -> float:
        return max(self.objectives) - min(self.objectives)


def multistart_uniqueness_probe(grid: Grid, metric, g: np.ndarray, cfg: SolverConfig | None = None,
                                starts=("zero", "extension", "random")) -> MultistartResult:
    """Solve from several initialisations; report the largest pairwise sup-distance."""
    if len(starts) < 2:
        raise SolverConfigError("need at least two starts")
    cfg = SolverConfig() if cfg is None else cfg
    sols, reps = [], []
    for start in starts:
        u, rep = solve_least_gradient(grid, metric, g, replace(cfg, init=start))
        sols.append(u)
        reps.append(rep)
    m = grid.mask
    dist = 0.0
    for a in range(len(sols)):
        for b in range(a + 1, len(sols)):
            dist = max(dist, float(np.max(np.abs(sols[a] - sols[b])[m])))
    return MultistartResult(dist, [r.objective for r in reps], sols, reps)
