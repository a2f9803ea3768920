"""Finsler integrands ``phi(x, xi)`` on a grid.

Two families are supported:

* :class:`WeightedIsotropic` -- ``phi(x, xi) = a(x) |xi|``;
* :class:`Riemannian` -- ``phi(x, xi) = a(x) sqrt(xi^T S(x) xi)`` with ``S``
  symmetric positive definite.

Both expose pointwise and field-wise evaluation of ``phi``, of its dual norm
``phi0(x, p) = sup{p . xi : phi(x, xi) <= 1}``, and the Euclidean projection
onto the dual unit ball ``{phi0 <= 1}``.  Field-wise methods take arrays of
shape ``(2, nx, ny)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

PROJ_TOL = 1e-12


class MetricError(ValueError):
    pass


def _as_cell_array(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        arr = np.broadcast_to(arr, shape).copy()
    if not np.all(np.isfinite(arr)):
        raise MetricError("metric data must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightedIsotropic:
    """``phi(x, xi) = a(x)|xi|``."""

    a: np.ndarray
    alpha: float | None = None

    kind = "isotropic"

    def __post_init__(self) -> None:
        a = _as_cell_array(self.a)
        if a.ndim != 2:
            raise MetricError(f"weight must be a 2-D cell array, got shape {a.shape}")
        object.__setattr__(self, "a", a)
        tight = min(float(a.min()), 1.0 / float(a.max())) if a.size else 0.0
        if float(a.min()) <= 0:
            raise MetricError(f"weight must be positive, min is {a.min():g}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", tight)
        elif not (0 < self.alpha <= float(a.min())):
            raise MetricError(f"alpha={self.alpha:g} violates 0 < alpha <= min a = {a.min():g}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape

    def scaled(self, c: float) -> "WeightedIsotropic":
        return WeightedIsotropic(c * self.a)

    def with_weight(self, a: np.ndarray) -> "WeightedIsotropic":
        return WeightedIsotropic(a)

    # pointwise

    def eval(self, cell, xi) -> float:
        return float(self.a[cell] * np.hypot(xi[0], xi[1]))

    def dual_eval(self, cell, p) -> float:
        return float(np.hypot(p[0], p[1]) / self.a[cell])

    def project_dual_ball(self, cell, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        n = np.hypot(p[0], p[1])
        a = self.a[cell]
        return p.copy() if n <= a else p * (a / n)

    # field-wise

    def eval_field(self, xi: np.ndarray) -> np.ndarray:
        return self.a * np.hypot(xi[0], xi[1])

    def dual_eval_field(self, p: np.ndarray) -> np.ndarray:
        return np.hypot(p[0], p[1]) / self.a

    def axis_weight(self, axis: int) -> np.ndarray:
        """``phi(x, e_axis)`` per cell."""
        return self.a

    def project_field(self, p: np.ndarray) -> np.ndarray:
        n = np.hypot(p[0], p[1])
        scale = np.where(n > self.a, self.a / np.where(n > 0, n, 1.0), 1.0)
        return p * scale

    def grad_xi_field(self, xi: np.ndarray) -> np.ndarray:
        """``D_xi phi(x, xi)``; defined as 0 at ``xi = 0``."""
        n = np.hypot(xi[0], xi[1])
        safe = np.where(n > 0, n, 1.0)
        return np.where(n > 0, self.a * xi / safe, 0.0)


@dataclass(frozen=True, eq=False)
class Riemannian:
    """``phi(x, xi) = a(x) sqrt(xi^T S(x) xi)``; ``sigma0`` has shape ``(nx, ny, 2, 2)``."""

    a: np.ndarray
    sigma0: np.ndarray
    alpha: float | None = None
    _eig: tuple = field(default=None, init=False, repr=False)  # type: ignore[assignment]

    kind = "riemannian"

    def __post_init__(self) -> None:
        a = _as_cell_array(self.a)
        if a.ndim != 2:
            raise MetricError(f"weight must be a 2-D cell array, got shape {a.shape}")
        s = _as_cell_array(self.sigma0, a.shape + (2, 2))
        if not np.allclose(s[..., 0, 1], s[..., 1, 0], rtol=0, atol=1e-12 * np.abs(s).max()):
            raise MetricError("sigma0 must be symmetric")
        s = s.copy()
        s[..., 1, 0] = s[..., 0, 1]
        s.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma0", s)
        if float(a.min()) <= 0:
            raise MetricError(f"weight must be positive, min is {a.min():g}")
        lam, vec = np.linalg.eigh(s)
        if float(lam.min()) <= 0:
            raise MetricError(f"sigma0 must be positive definite, min eigenvalue {lam.min():g}")
        object.__setattr__(self, "_eig", (lam, vec))
        lo = float((a * np.sqrt(lam[..., 0])).min())
        hi = float((a * np.sqrt(lam[..., 1])).max())
        tight = min(lo, 1.0 / hi)
        if self.alpha is None:
            object.__setattr__(self, "alpha", tight)
        elif not (0 < self.alpha <= float(a.min())):
            raise MetricError(f"alpha={self.alpha:g} violates 0 < alpha <= min a = {a.min():g}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape

    @property
    def eigenvalue_bounds(self) -> tuple[float, float]:
        lam = self._eig[0]
        return float(lam.min()), float(lam.max())

    @cached_property
    def _s(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = self.sigma0
        return s[..., 0, 0], s[..., 0, 1], s[..., 1, 1]

    @cached_property
    def _sinv(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s00, s01, s11 = self._s
        det = s00 * s11 - s01 * s01
        return s11 / det, -s01 / det, s00 / det

    def scaled(self, c: float) -> "Riemannian":
        return Riemannian(c * self.a, self.sigma0)

    def with_weight(self, a: np.ndarray) -> "Riemannian":
        return Riemannian(a, self.sigma0)

    # pointwise

    def eval(self, cell, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        q = xi @ self.sigma0[cell] @ xi
        return float(self.a[cell] * np.sqrt(max(q, 0.0)))

    def dual_eval(self, cell, p) -> float:
        p = np.asarray(p, dtype=float)
        q = p @ np.linalg.solve(self.sigma0[cell], p)
        return float(np.sqrt(max(q, 0.0)) / self.a[cell])

    def project_dual_ball(self, cell, p) -> np.ndarray:
        p = np.asarray(p, dtype=float).reshape(2, 1, 1)
        lam, vec = self._eig
        out = _project_ellipsoid(
            p, self.a[cell].reshape(1, 1), lam[cell].reshape(1, 1, 2), vec[cell].reshape(1, 1, 2, 2)
        )
        return out[:, 0, 0]

    # field-wise

    def _quad(self, xi: np.ndarray, inverse: bool = False) -> np.ndarray:
        s00, s01, s11 = self._sinv if inverse else self._s
        q = s00 * xi[0] ** 2 + 2.0 * s01 * xi[0] * xi[1] + s11 * xi[1] ** 2
        return np.maximum(q, 0.0)

    def eval_field(self, xi: np.ndarray) -> np.ndarray:
        return self.a * np.sqrt(self._quad(xi))

    def dual_eval_field(self, p: np.ndarray) -> np.ndarray:
        return np.sqrt(self._quad(p, inverse=True)) / self.a

    def axis_weight(self, axis: int) -> np.ndarray:
        s00, _, s11 = self._s
        return self.a * np.sqrt(s00 if axis == 0 else s11)

    def project_field(self, p: np.ndarray) -> np.ndarray:
        lam, vec = self._eig
        return _project_ellipsoid(p, self.a, lam, vec)

    def grad_xi_field(self, xi: np.ndarray) -> np.ndarray:
        s00, s01, s11 = self._s
        sx = np.stack([s00 * xi[0] + s01 * xi[1], s01 * xi[0] + s11 * xi[1]])
        n = np.sqrt(self._quad(xi))
        safe = np.where(n > 0, n, 1.0)
        return np.where(n > 0, self.a * sx / safe, 0.0)


def _project_ellipsoid(p, a, lam, vec, tol=PROJ_TOL, max_iter=100):
    """Project ``p`` onto ``{q : q^T S^{-1} q <= a^2}`` with ``S = V diag(lam) V^T``.

    The optimal point is ``q_i = lam_i p_i / (lam_i + mu)`` in the eigenbasis,
    where the multiplier ``mu >= 0`` solves ``F(mu) = a^2`` with
    ``F(mu) = sum lam_i p_i^2 / (lam_i + mu)^2``.  Newton is applied to
    ``1/sqrt(F) - 1/a`` (nearly linear in ``mu``), with bisection as the fallback
    whenever a step leaves the bracket ``[0, sqrt(F(0) mu-bound)]``.
    """
    p0 = vec[..., 0, 0] * p[0] + vec[..., 1, 0] * p[1]
    p1 = vec[..., 0, 1] * p[0] + vec[..., 1, 1] * p[1]
    l0, l1 = lam[..., 0], lam[..., 1]
    c0, c1 = l0 * p0 * p0, l1 * p1 * p1
    inside = p0 * p0 / l0 + p1 * p1 / l1 <= a * a
    out = np.array(p, dtype=float, copy=True)
    if np.all(inside):
        return out
    idx = ~inside
    c0, c1, l0, l1, av = c0[idx], c1[idx], l0[idx], l1[idx], a[idx]
    lo = np.zeros_like(av)
    hi = np.sqrt(c0 + c1) / av
    mu = lo.copy()
    for _ in range(max_iter):
        d0, d1 = l0 + mu, l1 + mu
        F = c0 / d0**2 + c1 / d1**2
        dF = -2.0 * (c0 / d0**3 + c1 / d1**3)
        G = 1.0 / np.sqrt(F) - 1.0 / av
        lo = np.where(G < 0, mu, lo)
        hi = np.where(G > 0, mu, hi)
        dG = -0.5 * dF / F**1.5
        step = G / dG
        new = mu - step
        bad = ~((new > lo) & (new < hi)) | ~np.isfinite(new)
        new = np.where(bad, 0.5 * (lo + hi), new)
        done = np.abs(new - mu) <= tol * (1.0 + mu)
        mu = new
        if np.all(done):
            break
    q0 = l0 * p0[idx] / (l0 + mu)
    q1 = l1 * p1[idx] / (l1 + mu)
    v = vec[idx]
    out[0][idx] = v[:, 0, 0] * q0 + v[:, 0, 1] * q1
    out[1][idx] = v[:, 1, 0] * q0 + v[:, 1, 1] * q1
    return out


def project_face_restricted(metric, p: np.ndarray, face_mask: np.ndarray) -> np.ndarray:
    """Project a dual field onto the feasible set compatible with missing faces.

    Where both faces of a cell are interior the dual ball is used.  Where only
    the ``k``-face exists the constraint is the shadow of the ball on axis
    ``k``: ``|p_k| <= phi(x, e_k)``.  Where neither exists the field is zero.
    """
    both = face_mask[0] & face_mask[1]
    out = np.where(both, metric.project_field(np.where(both, p, 0.0)), 0.0)
    for k in (0, 1):
        only = face_mask[k] & ~face_mask[1 - k]
        w = metric.axis_weight(k)
        out[k] = np.where(only, np.clip(p[k], -w, w), out[k])
    return out


@dataclass
class ConditionReport:
    samples: int
    c1_lower_margin: float
    c1_upper_margin: float
    homogeneity_residual: float
    triangle_margin: float
    c3_margin: float
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_conditions(metric, sample_count: int, seed: int = 0, lam: float | None = None,
                     fd_step: float = 1e-4) -> ConditionReport:
    """Sample ``(x, xi)`` pairs and check the standing hypotheses on ``phi``.

    Margins are normalised by ``|xi|``: ``c1_lower_margin = min(phi/|xi| - alpha)``,
    ``c1_upper_margin = min(1/alpha - phi/|xi|)``, ``triangle_margin =
    min(phi(xi)+phi(eta)-phi(xi+eta))``.  ``c3_margin`` is the smallest second
    difference of ``phi`` along unit directions tangent to the unit circle.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    nx, ny = metric.shape
    ci = rng.integers(0, nx, sample_count)
    cj = rng.integers(0, ny, sample_count)
    sub = _subsample(metric, ci, cj)
    xi = rng.standard_normal((2, sample_count, 1))
    eta = rng.standard_normal((2, sample_count, 1))
    norm = np.hypot(xi[0], xi[1])
    f = sub.eval_field(xi)
    alpha = float(metric.alpha)
    lower = float((f / norm - alpha).min())
    upper = float((1.0 / alpha - f / norm).min())
    lmb = rng.uniform(0.1, 10.0, (sample_count, 1)) if lam is None else lam
    hom = float(np.abs(sub.eval_field(lmb * xi) - lmb * f).max() / max(1.0, float(np.abs(f).max())))
    tri = float((f + sub.eval_field(eta) - sub.eval_field(xi + eta)).min())
    e = xi / norm
    t = np.stack([-e[1], e[0]])
    c3 = (sub.eval_field(e + fd_step * t) - 2.0 * sub.eval_field(e) + sub.eval_field(e - fd_step * t)) / fd_step**2
    c3m = float(c3.min())
    viol = []
    if lower < -1e-12:
        viol.append(f"C1 lower bound violated by {-lower:.3e}")
    if upper < -1e-12:
        viol.append(f"C1 upper bound violated by {-upper:.3e}")
    if hom > 1e-12:
        viol.append(f"homogeneity residual {hom:.3e}")
    if tri < -1e-12:
        viol.append(f"triangle inequality violated by {-tri:.3e}")
    if c3m <= 0:
        viol.append(f"tangential curvature not positive (min {c3m:.3e})")
    return ConditionReport(sample_count, lower, upper, hom, tri, c3m, viol)


def _subsample(metric, ci, cj):
    a = metric.a[ci, cj][:, None]
    if metric.kind == "isotropic":
        return WeightedIsotropic(a, alpha=float(a.min()))
    return Riemannian(a, metric.sigma0[ci, cj][:, None], alpha=float(a.min()))
