"""Radial profiles on the annulus ``1 < |x| < 2`` with weight ``a = 1/|x|``.

Every monotone profile ``u = g(|x|)`` with the same end values has the same
weighted variation ``2 pi |g(2) - g(1)|``, so the weighted problem has many
minimisers there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from leastgrad.grid import Grid
from leastgrad.metric import WeightedIsotropic
from leastgrad.tv import total_variation

R_IN = 1.0
R_OUT = 2.0


class ProfileError(ValueError):
    pass


@dataclass
class AnnulusResult:
    objectives: tuple[float, float]
    exact: float
    h: float

    @property
    def rel_errors(self) -> tuple[float, float]:
        if self.exact == 0:
            return tuple(abs(o) for o in self.objectives)
        return tuple(abs(o - self.exact) / self.exact for o in self.objectives)

    @property
    def mutual(self) -> float:
        a, b = self.objectives
        scale = max(abs(a), abs(b))
        return abs(a - b) / scale if scale > 0 else 0.0


def _check_monotone(g: Callable, samples: int = 2049) -> None:
    r = np.linspace(R_IN, R_OUT, samples)
    d = np.diff(np.asarray(g(r), dtype=float))
    if not (np.all(d >= 0) or np.all(d <= 0)):
        raise ProfileError("radial profile is not monotone on [1, 2]")


def annulus_metric(grid: Grid) -> WeightedIsotropic:
    x, y = grid.centers
    r = np.hypot(x, y)
    return WeightedIsotropic(np.where(grid.mask, 1.0 / np.maximum(r, 1e-12), 1.0))


def annulus_demo(g1: Callable, g2: Callable, n: int) -> AnnulusResult:
    """Weighted variation of ``g1(|x|)`` and ``g2(|x|)`` on an ``n x n`` grid over ``[-2, 2]^2``."""
    for g in (g1, g2):
        _check_monotone(g)
    ends1 = np.asarray(g1(np.array([R_IN, R_OUT])), dtype=float)
    ends2 = np.asarray(g2(np.array([R_IN, R_OUT])), dtype=float)
    if not np.allclose(ends1, ends2, rtol=0, atol=1e-12):
        raise ProfileError(f"profiles have different end values {ends1.tolist()} and {ends2.tolist()}")
    grid = Grid.annulus(n, R_IN, R_OUT)
    metric = annulus_metric(grid)
    x, y = grid.centers
    r = np.hypot(x, y)
    objs = tuple(total_variation(grid, metric, np.where(grid.mask, g(r), 0.0)) for g in (g1, g2))
    exact = 2 * math.pi * abs(float(ends1[1] - ends1[0]))
    return AnnulusResult(objs, exact, grid.h)
