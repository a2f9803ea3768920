"""Seeded randomized property suites.

Each suite draws its cases from ``numpy.random.default_rng(seed)`` and
returns a :class:`SuiteResult` with one row per checked property.  The same
seed always gives the same table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from leastgrad.grid import Grid, divergence, gradient
from leastgrad.metric import Riemannian, WeightedIsotropic
from leastgrad.solver import SolverConfig, comparison_probe, solve_least_gradient
from leastgrad.tv import coarea_residual, submodularity_margin

COMPARISON_TOL = 5e-3
COMPARISON_SOLVER_TOL = 1e-4


@dataclass
class SuiteRow:
    name: str
    trials: int
    passed: int
    worst: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.passed == self.trials

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{self.name:<28} {self.passed:>5}/{self.trials:<5} worst={self.worst:.3e} tol={self.tol:.1e} {status}"


@dataclass
class SuiteResult:
    suite: str
    seed: int
    rows: list[SuiteRow] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def table(self) -> str:
        head = f"suite {self.suite} seed {self.seed}"
        return "\n".join([head] + [r.line() for r in self.rows])

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "ok": self.ok,
            "rows": [
                {"name": r.name, "trials": r.trials, "passed": r.passed, "worst": r.worst, "tol": r.tol}
                for r in self.rows
            ],
        }


def _row(name: str, values, tol: float, upper: bool = True) -> SuiteRow:
    """Row for ``values <= tol`` (or ``values >= -tol`` when ``upper`` is false)."""
    v = np.asarray(values, dtype=float)
    if upper:
        passed = int(np.sum(v <= tol))
        worst = float(v.max()) if v.size else 0.0
    else:
        passed = int(np.sum(v >= -tol))
        worst = float(v.min()) if v.size else 0.0
    return SuiteRow(name, int(v.size), passed, worst, tol)


# -- random inputs --------------------------------------------------------

def random_weight(grid: Grid, rng: np.random.Generator, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    return rng.uniform(lo, hi, grid.shape)


def random_tensor(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """SPD tensors with eigenvalues in [0.25, 4] and random orientation."""
    ang = rng.uniform(0, np.pi, grid.shape)
    l1 = rng.uniform(0.25, 4.0, grid.shape)
    l2 = rng.uniform(0.25, 4.0, grid.shape)
    c, s = np.cos(ang), np.sin(ang)
    out = np.empty(grid.shape + (2, 2))
    out[..., 0, 0] = l1 * c * c + l2 * s * s
    out[..., 1, 1] = l1 * s * s + l2 * c * c
    out[..., 0, 1] = out[..., 1, 0] = (l1 - l2) * c * s
    return out


def random_metric(grid: Grid, rng: np.random.Generator, kind: str):
    a = random_weight(grid, rng)
    if kind == "isotropic":
        return WeightedIsotropic(a)
    return Riemannian(a, random_tensor(grid, rng))


def random_staircase(grid: Grid, rng: np.random.Generator, max_levels: int = 16) -> np.ndarray:
    """Piecewise constant field varying along one axis only (axis chosen at random)."""
    levels = int(rng.integers(2, max_levels + 1))
    axis = int(rng.integers(0, 2))
    n = grid.shape[axis]
    cuts = np.sort(rng.choice(np.arange(1, n), size=levels - 1, replace=False))
    vals = rng.uniform(-1.0, 1.0, levels)
    profile = vals[np.searchsorted(cuts, np.arange(n), side="right")]
    u = profile[:, None] if axis == 0 else profile[None, :]
    return np.broadcast_to(u, grid.shape).copy()


def random_cellset(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """Either a noise set or a union of up to three random rectangles (tight cases)."""
    if rng.random() < 0.5:
        return rng.random(grid.shape) < rng.uniform(0.2, 0.8)
    E = np.zeros(grid.shape, dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        i0, i1 = np.sort(rng.integers(0, grid.nx + 1, 2))
        j0, j1 = np.sort(rng.integers(0, grid.ny + 1, 2))
        E[i0:i1, j0:j1] = True
    return E


def comparison_setup(n: int = 64) -> tuple[Grid, WeightedIsotropic]:
    """The 64^2 disk with ``a = 1 + 0.5 sin(2 pi x) sin(2 pi y)``."""
    grid = Grid.disk(n, 0.45)
    x, y = grid.centers
    return grid, WeightedIsotropic(1.0 + 0.5 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))


def random_ordered_pair(grid: Grid, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Smooth boundary data ``g1 <= g2``: low Fourier modes in the polar angle plus a smooth bump."""
    c = grid.boundary_faces().centers(grid)
    th = np.arctan2(c[:, 1] - 0.5, c[:, 0] - 0.5)
    co = rng.normal(size=7)
    g1 = 0.2 * co[0] + sum(co[2 * k - 1] * np.cos(k * th) + co[2 * k] * np.sin(k * th) for k in range(1, 4)) / 3
    delta = rng.uniform(0, 0.5) * (1 + np.cos(th - rng.uniform(0, 2 * np.pi))) / 2 + rng.uniform(0, 0.1)
    return g1, g1 + delta


# -- suites ---------------------------------------------------------------

def suite_adjointness(seed: int, count: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    grids = [Grid.box(64), Grid.disk(64, 0.4)]
    errs = []
    for k in range(count):
        grid = grids[k % 2]
        u = rng.normal(size=grid.shape)
        p = rng.normal(size=(2,) + grid.shape)
        lhs = grid.inner(gradient(grid, u), p)
        rhs = -float(np.sum(grid.masked(u) * divergence(grid, p)) * grid.h**2)
        scale = abs(lhs) + abs(rhs) + 1e-300
        errs.append(abs(lhs - rhs) / scale)
    res = SuiteResult("adjointness", seed)
    res.rows.append(_row("<grad u,p> = -<u,div p>", errs, 1e-12))
    return res


def suite_coarea(seed: int, count: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    grid = Grid.box(64)
    res = SuiteResult("coarea", seed)
    for kind in ("isotropic", "riemannian"):
        vals = []
        for _ in range(count):
            m = random_metric(grid, rng, kind)
            u = random_staircase(grid, rng)
            vals.append(coarea_residual(grid, m, u))
        res.rows.append(_row(f"coarea residual ({kind})", vals, 1e-12))
    return res


def suite_submodularity(seed: int, count: int = 1000) -> SuiteResult:
    rng = np.random.default_rng(seed)
    grid = Grid.box(24)
    res = SuiteResult("submodularity", seed)
    per_kind = {"isotropic": (count + 1) // 2, "riemannian": count // 2}
    for kind, n in per_kind.items():
        vals = []
        for _ in range(n):
            m = random_metric(grid, rng, kind)
            E1, E2 = random_cellset(grid, rng), random_cellset(grid, rng)
            vals.append(submodularity_margin(grid, m, E1, E2))
        res.rows.append(_row(f"submodularity ({kind})", vals, 1e-12, upper=False))
    return res


def ordered_pair_margins(seed: int, count: int, cfg: SolverConfig | None = None) -> list[tuple[float, float]]:
    """:func:`comparison_probe` margins for ``count`` seeded ordered pairs on the comparison disk."""
    rng = np.random.default_rng(seed)
    grid, metric = comparison_setup()
    cfg = cfg or SolverConfig(tol=COMPARISON_SOLVER_TOL, max_iters=50000)
    out = []
    for _ in range(count):
        g1, g2 = random_ordered_pair(grid, rng)
        out.append(comparison_probe(grid, metric, g1, g2, cfg))
    return out


def pair_results(seed: int, margins) -> tuple[SuiteResult, SuiteResult]:
    """Comparison and stability tables from one batch of :func:`comparison_probe` margins."""
    comp = SuiteResult("comparison", seed)
    comp.rows.append(_row("max(u1 - u2) for g1 <= g2", [m[0] for m in margins], COMPARISON_TOL))
    stab = SuiteResult("stability", seed)
    stab.rows.append(_row("sup|u1-u2| - sup|g1-g2|", [m[1] for m in margins], COMPARISON_TOL))
    return comp, stab


def suite_comparison(seed: int, count: int = 20) -> SuiteResult:
    return pair_results(seed, ordered_pair_margins(seed, count))[0]


def suite_stability(seed: int, count: int = 20) -> SuiteResult:
    return pair_results(seed, ordered_pair_margins(seed, count))[1]


def suite_calibration(seed: int, count: int = 5) -> SuiteResult:
    from leastgrad.analysis.counterexample import (CounterexampleSpec, calibration_residual, common_trace,
                                                   counterexample_family, counterexample_fields,
                                                   counterexample_grid, frame_current, frame_metric)
    from leastgrad.tv import relaxed_energy

    rng = np.random.default_rng(seed)
    spec = CounterexampleSpec()
    grid = counterexample_grid(spec, 128)
    a, J = counterexample_fields(spec, grid)
    metric = frame_metric(spec, grid, a)
    Jf = frame_current(spec, grid, J)
    g = common_trace(spec, grid)
    ref = relaxed_energy(grid, metric, counterexample_family(spec, 0.0, grid), g)
    resid, spread = [], []
    for sigma in rng.uniform(0.0, 1.0, count):
        u = counterexample_family(spec, float(sigma), grid)
        resid.append(calibration_residual(grid, metric, Jf, u))
        spread.append(abs(relaxed_energy(grid, metric, u, g) - ref) / ref)
    res = SuiteResult("calibration", seed)
    res.rows.append(_row("calibration residual", resid, 0.05))
    res.rows.append(_row("objective spread / objective", spread, 1e-3))
    return res


SUITES = {
    "adjointness": suite_adjointness,
    "coarea": suite_coarea,
    "submodularity": suite_submodularity,
    "comparison": suite_comparison,
    "stability": suite_stability,
    "calibration": suite_calibration,
}


def run_suite(name: str, seed: int, count: int | None = None) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(name)
    fn = SUITES[name]
    return fn(seed) if count is None else fn(seed, count)


def shift_equivariance(grid: Grid, metric, g: np.ndarray, c: float, cfg: SolverConfig) -> float:
    """``max |u(g + c) - u(g) - c|`` over domain cells."""
    u1, _ = solve_least_gradient(grid, metric, g, cfg)
    u2, _ = solve_least_gradient(grid, metric, g + c, cfg)
    return float(np.max(np.abs(u2 - u1 - c)[grid.mask]))


__all__ = ["SUITES", "SuiteResult", "SuiteRow", "run_suite"]
