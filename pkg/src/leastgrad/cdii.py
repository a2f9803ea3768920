"""Conductivity recovery from the magnitude of the interior current density.

Pipeline: solve ``div(sigma grad u) = 0`` with Dirichlet data ``f``; form
``J = -sigma grad u``; take ``a = |J|``; recover ``u`` as the minimiser of the
weighted least gradient problem with weight ``a`` and data ``f``; finally
``sigma = a / |grad u|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from leastgrad.grid import Grid, gradient
from leastgrad.metric import WeightedIsotropic
from leastgrad.solver import SolveReport, SolverConfig, solve_least_gradient

log = logging.getLogger(__name__)

FLOOR_FRACTION_LIMIT = 0.10


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ConductionProblem:
    grid: Grid
    sigma: np.ndarray
    f: np.ndarray
    sigma_min: float = 0.0

    def __post_init__(self) -> None:
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.sigma.shape != self.grid.shape:
            raise ValueError(f"sigma shape {self.sigma.shape} != grid shape {self.grid.shape}")
        if self.f.shape != (len(self.grid.boundary_faces()),):
            raise ValueError("boundary voltage must have one value per boundary face")
        smin = float(self.sigma[self.grid.mask].min())
        if smin <= max(self.sigma_min, 0.0):
            raise ValueError(f"conductivity must exceed sigma_min={self.sigma_min:g}, min is {smin:g}")


@dataclass
class RecoveryReport:
    u_error: float
    sigma_error: float
    cg_iterations: int
    floor_count: int
    floor_excessive: bool
    solve: SolveReport | None = None
    flagged_weight_cells: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "u_error": self.u_error,
            "sigma_error": self.sigma_error,
            "cg_iterations": self.cg_iterations,
            "floor_count": self.floor_count,
            "floor_excessive": self.floor_excessive,
            "flagged_weight_cells": self.flagged_weight_cells,
        }
        if self.solve is not None:
            d["solve"] = self.solve.to_dict()
        return d


def face_conductivity(grid: Grid, sigma: np.ndarray) -> np.ndarray:
    """Harmonic-mean conductivity on the +x / +y faces (zero on missing faces)."""
    s = np.asarray(sigma, dtype=float)
    out = np.zeros((2,) + s.shape)
    out[0, :-1] = 2.0 * s[:-1] * s[1:] / (s[:-1] + s[1:])
    out[1, :, :-1] = 2.0 * s[:, :-1] * s[:, 1:] / (s[:, :-1] + s[:, 1:])
    return np.where(grid.face_mask, out, 0.0)


def conduction_matrix(grid: Grid, sigma: np.ndarray) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
    """Five-point flux matrix on domain cells.

    Returns ``(A, B, index)``: ``A`` acts on domain unknowns, ``B`` maps face
    voltages to the right-hand side, ``index`` maps cells to unknowns (-1 outside).
    A boundary face sits ``h/2`` from its cell centre, so its coefficient is
    ``2 sigma_cell``.
    """
    mask = grid.mask
    index = -np.ones(grid.shape, dtype=int)
    index[mask] = np.arange(int(mask.sum()))
    n = int(mask.sum())
    sf = face_conductivity(grid, sigma)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for k, (di, dj) in enumerate(((1, 0), (0, 1))):
        ii, jj = np.nonzero(grid.face_mask[k])
        c = index[ii, jj]
        d = index[ii + di, jj + dj]
        w = sf[k, ii, jj]
        rows += [c, d]
        cols += [d, c]
        vals += [-w, -w]
        np.add.at(diag, c, w)
        np.add.at(diag, d, w)
    bf = grid.boundary_faces()
    cb = index[bf.i, bf.j]
    wb = 2.0 * np.asarray(sigma, dtype=float)[bf.i, bf.j]
    np.add.at(diag, cb, wb)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    B = sparse.csr_matrix((wb, (cb, np.arange(len(bf)))), shape=(n, len(bf)))
    return A, B, index


def forward_conduction(p: ConductionProblem, cg_tol: float = 1e-12,
                       maxiter: int | None = None) -> tuple[np.ndarray, int]:
    """Solve the conduction problem by Jacobi-preconditioned CG.

    Returns ``(u, iterations)``.  The result is clipped to ``[min f, max f]``;
    the exact discrete solution already lies there (M-matrix), so clipping only
    removes CG round-off.
    """
    if not cg_tol > 0:
        raise ValueError("cg_tol must be positive")
    grid = p.grid
    A, B, index = conduction_matrix(grid, p.sigma)
    b = B @ p.f
    M = sparse.diags(1.0 / A.diagonal())
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = splinalg.cg(A, b, rtol=cg_tol, atol=0.0, M=M, maxiter=maxiter or 10 * A.shape[0], callback=cb)
    res = float(np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300))
    if info != 0 or res > 10 * cg_tol:
        raise ConvergenceError(f"CG did not converge: relative residual {res:.3e} (target {cg_tol:.1e})", res)
    u = np.zeros(grid.shape)
    u[grid.mask] = np.clip(x, p.f.min(), p.f.max())
    return u, count[0]


def current_density(grid: Grid, sigma: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``J = -sigma_face * grad u`` on the staggered interior faces."""
    return -face_conductivity(grid, sigma) * gradient(grid, u)


def cell_vector(grid: Grid, p: np.ndarray) -> np.ndarray:
    """Face field -> one vector per cell: forward face, else backward face, else 0.

    Cells on the high edge of the domain have no forward face in that
    direction; the backward face stands in so every domain cell sees both
    components wherever possible.
    """
    out = np.where(grid.face_mask, p, 0.0).copy()
    fm = grid.face_mask
    back0 = np.zeros_like(fm[0])
    back0[1:] = fm[0, :-1]
    back1 = np.zeros_like(fm[1])
    back1[:, 1:] = fm[1, :, :-1]
    prev0 = np.zeros_like(out[0])
    prev0[1:] = out[0, :-1]
    prev1 = np.zeros_like(out[1])
    prev1[:, 1:] = out[1, :, :-1]
    out[0] = np.where(~fm[0] & back0, prev0, out[0])
    out[1] = np.where(~fm[1] & back1, prev1, out[1])
    return out


def weight_from_current(grid: Grid, J: np.ndarray, sigma0: np.ndarray | None = None,
                        a_floor: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``a = |J|`` or ``sqrt(J^T sigma0^{-1} J)`` per cell; returns ``(a, flagged)``.

    ``flagged`` marks domain cells with ``a < a_floor`` (default ``1e-8 max a``).
    """
    Jc = cell_vector(grid, J)
    if sigma0 is None:
        a = np.hypot(Jc[0], Jc[1])
    else:
        s = np.asarray(sigma0, dtype=float)
        s = np.broadcast_to(s, grid.shape + (2, 2))
        det = s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]
        q = (s[..., 1, 1] * Jc[0] ** 2 - (s[..., 0, 1] + s[..., 1, 0]) * Jc[0] * Jc[1]
             + s[..., 0, 0] * Jc[1] ** 2) / det
        a = np.sqrt(np.maximum(q, 0.0))
    a = np.where(grid.mask, a, 0.0)
    if a_floor is None:
        a_floor = 1e-8 * float(a.max()) if a.max() > 0 else 1e-300
    flagged = grid.mask & (a < a_floor)
    return a, flagged


def recover_conductivity(grid: Grid, a: np.ndarray, u_rec: np.ndarray,
                         grad_floor: float) -> tuple[np.ndarray, np.ndarray]:
    """``sigma = a / max(|grad u|, grad_floor)``; returns ``(sigma, floored)``."""
    if not grad_floor > 0:
        raise ValueError("grad_floor must be positive")
    gc = cell_vector(grid, gradient(grid, u_rec))
    gn = np.hypot(gc[0], gc[1])
    floored = grid.mask & (gn < grad_floor)
    sigma = np.where(grid.mask, a / np.maximum(gn, grad_floor), 0.0)
    return sigma, floored


def rel_l2(grid: Grid, approx: np.ndarray, exact: np.ndarray, where: np.ndarray | None = None) -> float:
    sel = grid.mask if where is None else (grid.mask & where)
    num = np.sqrt(np.sum((approx - exact)[sel] ** 2))
    den = np.sqrt(np.sum(exact[sel] ** 2))
    return float(num / den) if den > 0 else float(num)


def default_grad_floor(grid: Grid, f: np.ndarray) -> float:
    span = float(np.max(f) - np.min(f))
    return 1e-8 * (span if span > 0 else 1.0) / grid.h


def cdii_pipeline(grid: Grid, sigma_true: np.ndarray, f: np.ndarray, cfg: SolverConfig | None = None,
                  cg_tol: float = 1e-12, grad_floor: float | None = None,
                  solve_stage=None) -> tuple[np.ndarray, RecoveryReport]:
    """Forward solve -> current density -> weight -> least gradient -> conductivity.

    ``solve_stage(grid, metric, f, u_forward)`` may replace the least gradient
    stage (used to short-circuit it in consistency checks).  The reported
    errors exclude cells where the gradient floor was active.
    """
    grad_floor = default_grad_floor(grid, f) if grad_floor is None else grad_floor
    try:
        prob = ConductionProblem(grid, sigma_true, f)
        u, iters = forward_conduction(prob, cg_tol)
    except Exception as exc:
        raise PipelineError("forward", exc) from exc
    try:
        J = current_density(grid, sigma_true, u)
        a, flagged = weight_from_current(grid, J)
        a_pos = np.where(grid.mask, np.maximum(a, max(float(a.max()) * 1e-8, 1e-300)), 1.0)
        metric = WeightedIsotropic(a_pos)
    except Exception as exc:
        raise PipelineError("weight", exc) from exc
    try:
        if solve_stage is None:
            u_rec, rep = solve_least_gradient(grid, metric, f, cfg)
        else:
            u_rec, rep = solve_stage(grid, metric, f, u), None
    except Exception as exc:
        raise PipelineError("least_gradient", exc) from exc
    try:
        sigma_rec, floored = recover_conductivity(grid, a_pos, u_rec, grad_floor)
    except Exception as exc:
        raise PipelineError("recover", exc) from exc
    ok = ~floored
    n_floor = int(floored.sum())
    excessive = n_floor > FLOOR_FRACTION_LIMIT * int(grid.mask.sum())
    if excessive:
        log.warning("gradient floor active on %d of %d cells", n_floor, int(grid.mask.sum()))
    report = RecoveryReport(
        u_error=rel_l2(grid, u_rec, u),
        sigma_error=rel_l2(grid, sigma_rec, np.asarray(sigma_true, dtype=float), ok),
        cg_iterations=iters,
        floor_count=n_floor,
        floor_excessive=excessive,
        solve=rep,
        flagged_weight_cells=int(flagged.sum()),
    )
    return sigma_rec, report
