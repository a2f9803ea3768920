"""Constructions around the weighted problem: a calibrated non-uniqueness
family, the barrier indicator and radial profiles on the annulus."""

from leastgrad.analysis.annulus import AnnulusResult, ProfileError, annulus_demo
from leastgrad.analysis.barrier import BarrierResult, LevelSet, LevelSetError, barrier_indicator
from leastgrad.analysis.counterexample import (
    CounterexampleSpec,
    NonuniquenessTable,
    ResolutionError,
    calibration_residual,
    counterexample_family,
    counterexample_fields,
    counterexample_grid,
    nonuniqueness_demo,
)

__all__ = [
    "AnnulusResult",
    "BarrierResult",
    "CounterexampleSpec",
    "LevelSet",
    "LevelSetError",
    "NonuniquenessTable",
    "ProfileError",
    "ResolutionError",
    "annulus_demo",
    "barrier_indicator",
    "calibration_residual",
    "counterexample_family",
    "counterexample_fields",
    "counterexample_grid",
    "nonuniqueness_demo",
]
