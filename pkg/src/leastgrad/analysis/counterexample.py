"""A calibrated family of distinct minimisers for a C^{1,alpha} weight (n = 2).

Points are written ``(x, z)`` with ``r = |x|``.  The stream function

    psi(r, z) = r - b(r) |z|^(1+theta) / (1+theta)

(``b`` a C^2 bump: 0 on r <= 1/3, 1 on [1/2, 1], -1 on [2, 3]) defines a
divergence-free current ``J = (-sgn(x) psi_z, psi_r)`` with ``|J| > 0``.  Its
field lines through the origin branch because ``psi_z ~ z^theta`` is not
Lipschitz, which leaves room for a one-parameter family ``u_sigma`` whose level
curves all follow ``grad psi``; each is calibrated by ``J`` and so minimises
``int |J| |Du|`` for the same boundary data.

The interesting structure is only ``~1e-4`` tall in z, so computations run in
the frame ``z = eps m(r) zh`` where ``m`` follows the lens edge (``m = zeta1 /
zeta1(0) + floor``).  That keeps ``z = 0`` a face row and turns the lens edge
into a nearly horizontal curve, so its staircase does not leave an
``O(1)``-in-h metrication error in the calibration pairing.  Under the map
``Phi`` the weighted integrand becomes the Riemannian one with
``a' = a`` and ``S = det(DPhi)^2 DPhi^{-1} DPhi^{-T}``, and the current pulls
back as ``det(DPhi) DPhi^{-1} J``; both preserve the functional and the
calibration pairing exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from leastgrad.grid import Grid, gradient
from leastgrad.metric import Riemannian
from leastgrad.tv import relaxed_energy, total_variation

HALF_WIDTH = 3.0
MAX_SPACING = 1.0 / 8.0


class ResolutionError(ValueError):
    pass


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def _smoothstep_d(t):
    inside = (t > 0) & (t < 1)
    return np.where(inside, 30.0 * t * t * (t - 1.0) ** 2, 0.0)


def bump(r):
    """The C^2 profile ``b(r)``: 0, rising to 1 on [1/3, 1/2], 1 on [1/2, 1], falling to -1 on [1, 2]."""
    r = np.asarray(r, dtype=float)
    rise = _smoothstep((r - 1.0 / 3.0) * 6.0)
    fall = 2.0 * _smoothstep(r - 1.0)
    return np.where(r < 1.0, rise, 1.0 - fall)


def bump_d(r):
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, 6.0 * _smoothstep_d((r - 1.0 / 3.0) * 6.0), -2.0 * _smoothstep_d(r - 1.0))


@dataclass(frozen=True)
class CounterexampleSpec:
    """Parameters of the construction.

    ``z_scale`` is the stretch ``eps``; by default the height of the lens at
    ``r = 0`` so that the lens is one unit tall in the computational frame.
    ``margin`` (frame units) pads the rectangle around the jump set.
    ``adapt`` selects the lens-following profile ``m(r)`` (otherwise the
    plain stretch ``m = 1``); ``frame_floor`` is its lower bound in frame
    units, one cell width when ``None``.
    """

    theta: float = 0.75
    z_scale: float | None = None
    margin: float = 0.5
    step_fraction: float = 0.25
    adapt: bool = True
    frame_floor: float | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not 0.5 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (1/2, 1), got {self.theta}")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.frame_floor is not None and not 0 < self.frame_floor <= 1:
            raise ValueError("frame_floor must lie in (0, 1] or be None")

    # -- stream function and current ------------------------------------

    def psi(self, r, z):
        t = self.theta
        return r - bump(r) * np.abs(z) ** (1 + t) / (1 + t)

    def psi_r(self, r, z):
        t = self.theta
        return 1.0 - bump_d(r) * np.abs(z) ** (1 + t) / (1 + t)

    def psi_z(self, r, z):
        return -bump(r) * np.sign(z) * np.abs(z) ** self.theta

    def current(self, x, z):
        r = np.abs(x)
        return np.stack([-np.sign(x) * self.psi_z(r, z), self.psi_r(r, z)])

    # -- interfaces -------------------------------------------------------

    def zeta2(self, r):
        """Upper edge of the fan, ``[(1-theta)(r-2)]^{1/(1-theta)}`` on [2, 3]."""
        t = self.theta
        return np.maximum((1 - t) * (np.asarray(r, dtype=float) - 2.0), 0.0) ** (1.0 / (1 - t))

    def zeta1_closed(self, r):
        t = self.theta
        return np.maximum((1 - t) * (1.0 - np.asarray(r, dtype=float)), 0.0) ** (1.0 / (1 - t))

    def interface_slope(self, r, z):
        """``dz/dr = psi_z / psi_r`` along a field line of ``grad psi``."""
        return self.psi_z(r, z) / self.psi_r(r, z)

    def zeta1_table(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        """RK4 continuation of the lens edge from ``r = 1/2`` down to ``r = 0``.

        Returns nodes ``r`` (ascending, ending at 1/2) and heights ``z``.
        """
        n = max(1, math.ceil(0.5 / step))
        hs = 0.5 / n
        key = ("zeta1", n)
        if key in self._cache:
            return self._cache[key]
        r = 0.5
        z = float(self.zeta1_closed(0.5))
        rs, zs = [r], [z]
        f = self.interface_slope
        for _ in range(n):
            k1 = f(r, z)
            k2 = f(r - hs / 2, z - hs / 2 * k1)
            k3 = f(r - hs / 2, z - hs / 2 * k2)
            k4 = f(r - hs, z - hs * k3)
            z = z - hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            r = 0.5 - (len(rs)) * hs
            rs.append(r)
            zs.append(z)
        out = (np.array(rs[::-1]), np.array(zs[::-1]))
        self._cache[key] = out
        return out

    def zeta1(self, r, step: float):
        """Lens edge: closed form on [1/2, 1], interpolated ODE table below 1/2."""
        r = np.asarray(r, dtype=float)
        rs, zs = self.zeta1_table(step)
        spline = CubicHermiteSpline(rs, zs, self.interface_slope(rs, zs))
        low = spline(np.clip(r, 0.0, 0.5))
        return np.where(r >= 0.5, self.zeta1_closed(r), low)

    def zeta1_d(self, r, step: float):
        r = np.asarray(r, dtype=float)
        rs, zs = self.zeta1_table(step)
        spline = CubicHermiteSpline(rs, zs, self.interface_slope(rs, zs))
        t = self.theta
        hi = -np.maximum((1 - t) * (1.0 - r), 0.0) ** (t / (1 - t))
        return np.where(r >= 0.5, hi, spline.derivative()(np.clip(r, 0.0, 0.5)))

    def frame_profile(self, r, step: float, floor: float) -> tuple[np.ndarray, np.ndarray]:
        """``m(r)`` and ``m'(r)`` of the map ``z = eps m(r) zh``.

        ``m = zeta1 / zeta1(0) + floor`` on ``r <= 1``, then a smoothstep back
        to 1 on ``[1, 3/2]``; only the flat jump ``z = 0`` lives there.
        """
        r = np.asarray(r, dtype=float)
        if not self.adapt:
            return np.ones_like(r), np.zeros_like(r)
        h0 = self.lens_height()
        inside = r < 1.0
        t = 2.0 * (r - 1.0)
        m = np.where(inside, self.zeta1(r, step) / h0 + floor, floor + (1.0 - floor) * _smoothstep(t))
        dm = np.where(inside, self.zeta1_d(r, step) / h0, 2.0 * (1.0 - floor) * _smoothstep_d(t))
        return m, dm

    def lens_height(self) -> float:
        return float(self.zeta1_table(1e-3)[1][0])

    @property
    def eps(self) -> float:
        return self.lens_height() if self.z_scale is None else float(self.z_scale)

    # -- the family -------------------------------------------------------

    def u_sigma(self, sigma: float, x, z, step: float):
        if not 0.0 <= sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {sigma}")
        t = self.theta
        r = np.abs(np.asarray(x, dtype=float))
        z = np.asarray(z, dtype=float)
        z1 = self.zeta1(r, step)
        z2 = self.zeta2(r)
        zp = np.maximum(z, 0.0)
        fan = zp ** (1 - t) / (1 - t) - r + 3.0
        u = np.ones(np.broadcast(r, z).shape)
        u = np.where((r <= 1.0) & (z > 0) & (z < z1), sigma, u)
        u = np.where((r >= 2.0) & (z > 0) & (z < z2), fan, u)
        u = np.where(z < 0, 0.0, u)
        return u

    def lens_mask(self, x, z, step: float):
        r = np.abs(np.asarray(x, dtype=float))
        return (r <= 1.0) & (z > 0) & (z < self.zeta1(r, step))


def counterexample_grid(spec: CounterexampleSpec, n: int) -> Grid:
    """Rectangle ``(-3, 3) x (zh_lo, zh_hi)`` (stretched frame) with ``n`` cells across.

    ``zh = 0`` falls on a row of faces; the lens (height 1) sits inside with
    ``spec.margin`` of padding above and below.
    """
    h = 2 * HALF_WIDTH / n
    below = max(2, round(spec.margin / h))
    above = max(2, math.ceil((1.0 + spec.margin) / h))
    return Grid(n, below + above, h, (-HALF_WIDTH, -below * h))


def _check_resolution(grid: Grid) -> None:
    if grid.h > MAX_SPACING:
        raise ResolutionError(f"spacing {grid.h:g} cannot resolve the bump transitions (need <= {MAX_SPACING})")


def _frame(spec: CounterexampleSpec, grid: Grid, x, zh):
    floor = grid.h if spec.frame_floor is None else spec.frame_floor
    m, dm = spec.frame_profile(np.abs(x), spec.step_fraction * grid.h, floor)
    eps = spec.eps
    return eps * m * zh, eps * m, eps * np.sign(x) * dm * zh


def physical_centers(spec: CounterexampleSpec, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x, zh = grid.centers
    return x, _frame(spec, grid, x, zh)[0]


def counterexample_fields(spec: CounterexampleSpec, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Weight ``a = |J|`` and the physical current ``J`` at cell centres."""
    _check_resolution(grid)
    x, z = physical_centers(spec, grid)
    J = spec.current(x, z)
    return np.hypot(J[0], J[1]), J


def frame_metric(spec: CounterexampleSpec, grid: Grid, a: np.ndarray) -> Riemannian:
    """The weighted integrand ``a|xi|`` expressed in the computational frame.

    With ``DPhi = [[1, 0], [c, d]]`` the pulled-back integrand is
    ``a sqrt(d^2 xi_x^2 - 2 c d xi_x xi_zh + (1 + c^2) xi_zh^2)``.
    """
    x, zh = grid.centers
    _, d, c = _frame(spec, grid, x, zh)
    s = np.empty(a.shape + (2, 2))
    s[..., 0, 0] = d * d
    s[..., 0, 1] = s[..., 1, 0] = -c * d
    s[..., 1, 1] = 1.0 + c * c
    return Riemannian(a, s)


def frame_current(spec: CounterexampleSpec, grid: Grid, J: np.ndarray) -> np.ndarray:
    """Piola pull-back ``det(DPhi) DPhi^{-1} J``."""
    x, zh = grid.centers
    _, d, c = _frame(spec, grid, x, zh)
    return np.stack([d * J[0], J[1] - c * J[0]])


def counterexample_family(spec: CounterexampleSpec, sigma: float, grid: Grid) -> np.ndarray:
    _check_resolution(grid)
    x, z = physical_centers(spec, grid)
    return spec.u_sigma(sigma, x, z, spec.step_fraction * grid.h)


def common_trace(spec: CounterexampleSpec, grid: Grid) -> np.ndarray:
    """Boundary values shared by every ``u_sigma`` (taken from ``u_0`` at face midpoints)."""
    c = grid.boundary_faces().centers(grid)
    z = _frame(spec, grid, c[:, 0], c[:, 1])[0]
    return spec.u_sigma(0.0, c[:, 0], z, spec.step_fraction * grid.h)


def calibration_residual(grid: Grid, metric, J_frame: np.ndarray, u: np.ndarray) -> float:
    """``|sum J.Du - sum phi(Du)| / sum phi(Du)`` with the discrete gradient (0 if ``u`` is flat)."""
    rhs = total_variation(grid, metric, u)
    if rhs == 0.0:
        return 0.0
    lhs = grid.inner(np.where(grid.mask, J_frame, 0.0), gradient(grid, u))
    return abs(lhs - rhs) / rhs


def calibration_defect(grid: Grid, metric, J_frame: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per-cell ``phi(Du) - J.Du`` (nonnegative when ``phi0(J) <= 1``)."""
    du = gradient(grid, u)
    return metric.eval_field(du) - np.sum(J_frame * du, axis=0)


@dataclass
class NonuniquenessTable:
    sigmas: list[float]
    objectives: list[float]
    residuals: list[float]
    tolerance: float
    spread: float
    solver_objective: float | None
    solver_converged: bool | None
    control_objectives: list[float]
    control_gap: float
    extra: dict = field(default_factory=dict)

    @property
    def common_objective(self) -> float:
        return float(np.mean(self.objectives))

    def to_dict(self) -> dict:
        return {
            "sigmas": self.sigmas,
            "objectives": self.objectives,
            "calibration_residuals": self.residuals,
            "tolerance": self.tolerance,
            "spread": self.spread,
            "solver_objective": self.solver_objective,
            "solver_converged": self.solver_converged,
            "control_objectives": self.control_objectives,
            "control_gap": self.control_gap,
        }


def nonuniqueness_demo(spec: CounterexampleSpec, grid: Grid, sigmas=(0.0, 0.5, 1.0),
                       rel_tol: float = 1e-3, solve: bool = True, cfg=None,
                       control_factor: float = 1.1) -> NonuniquenessTable:
    """Objectives of ``u_sigma`` under the common trace, plus a solver run and a control.

    The control multiplies the weight by ``control_factor`` on the lens cells,
    which must split the objectives of ``u_0`` and ``u_1``.
    """
    from leastgrad.solver import SolverConfig, solve_least_gradient

    a, J = counterexample_fields(spec, grid)
    metric = frame_metric(spec, grid, a)
    Jf = frame_current(spec, grid, J)
    g = common_trace(spec, grid)
    fields = [counterexample_family(spec, s, grid) for s in sigmas]
    objs = [relaxed_energy(grid, metric, u, g) for u in fields]
    res = [calibration_residual(grid, metric, Jf, u) for u in fields]
    common = float(np.mean(objs))
    tol = rel_tol * common
    spread = float(max(objs) - min(objs))

    x, z = physical_centers(spec, grid)
    lens = spec.lens_mask(x, z, spec.step_fraction * grid.h)
    control = frame_metric(spec, grid, np.where(lens, control_factor * a, a))
    ctrl = [relaxed_energy(grid, control, u, g) for u in fields]
    ctrl_gap = float(max(ctrl) - min(ctrl))

    solver_obj = None
    converged = None
    if solve:
        cfg = cfg or SolverConfig(tol=1e-4, max_iters=20000)
        _, rep = solve_least_gradient(grid, metric, g, cfg)
        solver_obj = rep.objective
        converged = rep.converged
    return NonuniquenessTable(list(map(float, sigmas)), objs, res, tol, spread, solver_obj,
                              converged, ctrl, ctrl_gap)
