"""Gradient descent on the leader control with Armijo backtracking."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cascade import CascadeError, MfocSolution, descent_direction, leader_objective, run_cascade
from .fv import TimeSeries
from .problem import ArmijoConfig, ProblemSpec, validate

log = logging.getLogger(__name__)

EPS_ABS = 1e-12

CONVERGED = "converged"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILED = "line_search_failed"
SOLVER_ERROR = "solver_error"


class LineSearchFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    objective: float
    step_size: float
    rel_change: float
    direction_norm: float
    wall_time: float


@dataclass
class OptimizeResult:
    v_star: TimeSeries
    v_initial: TimeSeries
    solution: MfocSolution | None
    history: list[IterationRecord] = field(default_factory=list)
    status: str = MAX_ITER
    message: str = ""
    initial_objective: float = float("nan")

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def final_objective(self) -> float:
        return self.history[-1].objective if self.history else self.initial_objective


def armijo_search(v: TimeSeries, d: TimeSeries, f0: float, slope: float,
                  objective_of: Callable[[TimeSeries], float], cfg: ArmijoConfig = ArmijoConfig()):
    """Backtrack from ``cfg.sigma_init`` until ``f(v + s d) <= f0 + c1 s slope``.

    Returns ``(sigma, f_new, payload)`` where ``payload`` is whatever extra the
    objective returned (``objective_of`` may return ``f`` or ``(f, payload)``).
    Raises ``LineSearchFailure`` when no step is accepted.
    """
    if not np.any(d.values):
        raise ValueError("search direction is identically zero")
    if not slope < 0:
        raise ValueError(f"slope must be negative for a descent direction, got {slope}")
    sigma = cfg.sigma_init
    for _ in range(cfg.max_backtracks + 1):
        trial = TimeSeries(v.times, v.values + sigma * d.values)
        res = objective_of(trial)
        f_new, payload = res if isinstance(res, tuple) else (res, None)
        if np.isfinite(f_new) and f_new <= f0 + cfg.c1 * sigma * slope:
            return sigma, f_new, payload
        sigma *= cfg.shrink
    raise LineSearchFailure(f"no sufficient decrease after {cfg.max_backtracks} backtracks")


def optimize(spec: ProblemSpec, v_init: TimeSeries | None = None) -> OptimizeResult:
    """Leader descent loop: cascade solve, descent direction, Armijo step, until the control stalls."""
    errs = validate(spec)
    if errs:
        raise ValueError("; ".join(errs))
    if not spec.kernel.is_zero:
        raise ValueError("optimize requires a zero interaction kernel")

    times = spec.times
    dt = spec.dt_out
    v = v_init if v_init is not None else TimeSeries.sample(spec.v0, times)
    result = OptimizeResult(v_star=v, v_initial=v, solution=None)

    def evaluate(trial: TimeSeries):
        sol = run_cascade(spec, trial)
        return leader_objective(spec, trial, sol.m_g), sol

    try:
        f, sol = evaluate(v)
    except CascadeError as exc:
        result.status, result.message = SOLVER_ERROR, str(exc)
        return result
    result.solution = sol
    result.initial_objective = f

    for k in range(spec.max_iter):
        start = time.perf_counter()
        d = descent_direction(spec, v, sol.m_g, sol.phi2)
        d_sq = float(np.sum(d.values**2))
        if d_sq == 0.0:
            result.history.append(IterationRecord(k, f, 0.0, 0.0, 0.0, time.perf_counter() - start))
            result.status = CONVERGED
            break
        try:
            sigma, f_new, sol_new = armijo_search(v, d, f, -d_sq * dt, evaluate, spec.armijo)
        except LineSearchFailure as exc:
            result.status, result.message = LINE_SEARCH_FAILED, str(exc)
            break
        except CascadeError as exc:
            result.status, result.message = SOLVER_ERROR, str(exc)
            break
        v_new = TimeSeries(times, v.values + sigma * d.values)
        rel = float(np.linalg.norm(v_new.values - v.values) / max(np.linalg.norm(v.values), EPS_ABS))
        v, f, sol = v_new, f_new, sol_new
        result.v_star, result.solution = v, sol
        result.history.append(IterationRecord(k, f, sigma, rel, float(np.sqrt(d_sq)),
                                              time.perf_counter() - start))
        log.debug("iter %d  J=%.10g  sigma=%.3g  rel=%.3g", k, f, sigma, rel)
        if rel < spec.rel_tol:
            result.status = CONVERGED
            break
    else:
        result.status = MAX_ITER
    return result


def objective_trace(result: OptimizeResult) -> np.ndarray:
    """Rows ``(iter, objective, step_size, rel_change)``; shape ``(n_iter, 4)``."""
    if not result.history:
        return np.empty((0, 4))
    return np.array([(r.iter, r.objective, r.step_size, r.rel_change) for r in result.history], dtype=float)
