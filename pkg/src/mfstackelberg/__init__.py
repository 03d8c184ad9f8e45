"""Linear-quadratic mean-field Stackelberg games on a periodic state space.

The leader's control ``v(t)`` is optimized by gradient descent; each gradient
comes from a cascade of four one-dimensional conservation laws solved with
Lax-Friedrichs finite volumes.  An N-particle Pontryagin oracle checks the
mean-field solution independently.
"""

from __future__ import annotations

from ._kernels import BACKEND
from .cascade import (
    CascadeError,
    MfocSolution,
    descent_direction,
    leader_objective,
    reduced_objective,
    run_cascade,
)
from .fv import BlowUpError, CellField, FieldTrajectory, PeriodicGrid1D, TimeSeries
from .optimize import OptimizeResult, armijo_search, optimize
from .particles import consistency_residual, density_gap, solve_follower_tpbvp
from .problem import ArmijoConfig, ProblemSpec, paper_spec, validate

__all__ = [
    "BACKEND",
    "ArmijoConfig",
    "BlowUpError",
    "CascadeError",
    "CellField",
    "FieldTrajectory",
    "MfocSolution",
    "OptimizeResult",
    "PeriodicGrid1D",
    "ProblemSpec",
    "TimeSeries",
    "armijo_search",
    "consistency_residual",
    "density_gap",
    "descent_direction",
    "leader_objective",
    "optimize",
    "paper_spec",
    "reduced_objective",
    "run_cascade",
    "solve_follower_tpbvp",
    "validate",
]
