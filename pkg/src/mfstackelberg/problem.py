"""Game data for the linear-quadratic mean-field Stackelberg problem.

Objectives are value/gradient descriptors.  Every callable must accept numpy
arrays (broadcasting) as well as floats, since the solvers evaluate them on
whole grids at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MomentMap:
    value: Callable
    derivative: Callable
    name: str = "identity"


@dataclass(frozen=True)
class LeaderObjective:
    """J^L(v, m; t) with its partial derivatives and the desired control."""

    value: Callable
    grad_v: Callable
    grad_m: Callable
    desired_control: Callable
    name: str = "paper"


@dataclass(frozen=True)
class FollowerObjective:
    """J^F(m, v) with partial derivatives."""

    value: Callable
    grad_m: Callable
    grad_v: Callable
    name: str = "paper"


@dataclass(frozen=True)
class InteractionKernel:
    value: Callable
    is_zero: bool = False
    name: str = "custom"


@dataclass(frozen=True)
class ArmijoConfig:
    sigma_init: float = 1.0
    shrink: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 40

    def problems(self) -> list[str]:
        out = []
        if not self.sigma_init > 0:
            out.append("armijo.sigma_init must be positive")
        if not 0 < self.shrink < 1:
            out.append("armijo.shrink must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            out.append("armijo.c1 must lie in (0, 1)")
        if self.max_backtracks < 0:
            out.append("armijo.max_backtracks must be non-negative")
        return out


# --------------------------------------------------------------------------
# built-in descriptors
# --------------------------------------------------------------------------


def desired_control(t):
    return np.sin(TWO_PI * t)


IDENTITY_MOMENT = MomentMap(
    value=lambda xi: xi,
    derivative=lambda xi: np.ones_like(np.asarray(xi, dtype=float)),
    name="identity",
)

# leader tracks v_d + m:  J^L = 1/2 (v_d(t) + m - v)^2
PAPER_LEADER = LeaderObjective(
    value=lambda v, m, t: 0.5 * (desired_control(t) + m - v) ** 2,
    grad_v=lambda v, m, t: -(desired_control(t) + m - v),
    grad_m=lambda v, m, t: desired_control(t) + m - v,
    desired_control=desired_control,
    name="paper",
)

# leader that ignores the followers' moment: grad_m == 0
DECOUPLED_LEADER = LeaderObjective(
    value=lambda v, m, t: 0.5 * (desired_control(t) - v) ** 2 + 0.0 * m,
    grad_v=lambda v, m, t: -(desired_control(t) - v) + 0.0 * m,
    grad_m=lambda v, m, t: 0.0 * (desired_control(t) + m - v),
    desired_control=desired_control,
    name="decoupled_leader",
)

# followers move away from the leader control: J^F = -1/2 (m - v)^2
PAPER_FOLLOWER = FollowerObjective(
    value=lambda m, v: -0.5 * (m - v) ** 2,
    grad_m=lambda m, v: -(m - v),
    grad_v=lambda m, v: m - v,
    name="paper",
)

# J^F independent of the state: the follower problem is trivial
FLAT_FOLLOWER = FollowerObjective(
    value=lambda m, v: -0.5 * v**2 + 0.0 * m,
    grad_m=lambda m, v: 0.0 * (m - v),
    grad_v=lambda m, v: -v + 0.0 * m,
    name="flat_follower",
)

ZERO_KERNEL = InteractionKernel(
    value=lambda xi, xih: np.zeros(np.broadcast(np.asarray(xi), np.asarray(xih)).shape),
    is_zero=True,
    name="zero",
)


def constant_kernel(c: float) -> InteractionKernel:
    return InteractionKernel(
        value=lambda xi, xih: np.full(np.broadcast(np.asarray(xi), np.asarray(xih)).shape, float(c)),
        is_zero=(c == 0.0),
        name=f"constant({c})",
    )


def indicator(a: float, b: float) -> Callable:
    """Indicator of ``[a, b]`` (unnormalized)."""

    def g0(xi):
        xi = np.asarray(xi, dtype=float)
        return ((xi >= a) & (xi <= b)).astype(float)

    g0.descr = f"indicator {a:g} {b:g}"
    return g0


def linear_control(t):
    return np.asarray(t, dtype=float) * 1.0


def constant_control(c: float) -> Callable:
    def v0(t):
        return np.full(np.shape(t), float(c)) if np.ndim(t) else float(c)

    v0.descr = f"{c:g}"
    return v0


OBJECTIVE_PRESETS = {
    "paper": (PAPER_LEADER, PAPER_FOLLOWER, IDENTITY_MOMENT),
    "decoupled_leader": (DECOUPLED_LEADER, PAPER_FOLLOWER, IDENTITY_MOMENT),
    "flat_follower": (PAPER_LEADER, FLAT_FOLLOWER, IDENTITY_MOMENT),
}


# --------------------------------------------------------------------------
# problem specification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    xi_min: float = 0.0
    xi_max: float = 2.0
    T: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    leader_obj: LeaderObjective = PAPER_LEADER
    follower_obj: FollowerObjective = PAPER_FOLLOWER
    moment: MomentMap = IDENTITY_MOMENT
    kernel: InteractionKernel = ZERO_KERNEL
    g0: Callable = field(default_factory=lambda: indicator(0.5, 1.5))
    n_xi: int = 500
    n_t: int = 100
    cfl: float = 0.95
    max_iter: int = 100
    rel_tol: float = 2e-5
    armijo: ArmijoConfig = ArmijoConfig()
    v0: Callable = linear_control

    @property
    def dxi(self) -> float:
        return (self.xi_max - self.xi_min) / self.n_xi

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t)

    @property
    def dt_out(self) -> float:
        return self.T / (self.n_t - 1)

    def centers(self) -> np.ndarray:
        return self.xi_min + (np.arange(self.n_xi) + 0.5) * self.dxi

    def initial_density(self) -> np.ndarray:
        """Cell values of g0 rescaled to unit mass under the midpoint rule."""
        vals = np.asarray(self.g0(self.centers()), dtype=float)
        mass = vals.sum() * self.dxi
        if not mass > 0:
            raise ValueError("initial density has no mass on the grid")
        return vals / mass

    def with_(self, **changes) -> "ProblemSpec":
        """Copy with changes; ``rel_tol`` follows ``n_xi`` unless given."""
        if "n_xi" in changes and "rel_tol" not in changes:
            changes["rel_tol"] = 1.0 / (100 * changes["n_xi"])
        return replace(self, **changes)


def paper_spec(n_xi: int = 500, **overrides) -> ProblemSpec:
    """The numerical-experiment configuration: xi in [0, 2], T = 1, g0 uniform on [0.5, 1.5]."""
    spec = ProblemSpec(n_xi=n_xi, rel_tol=1.0 / (100 * n_xi))
    return spec.with_(**overrides) if overrides else spec


def validate(spec: ProblemSpec) -> list[str]:
    """Return every violated invariant (empty list means valid)."""
    errs = []
    finite = all(np.isfinite(x) for x in (spec.xi_min, spec.xi_max, spec.T, spec.beta, spec.gamma))
    if not finite:
        errs.append("domain, horizon and regularizations must be finite")
    if spec.xi_min == spec.xi_max:
        errs.append("xi_min/xi_max: empty domain")
    elif not spec.xi_min < spec.xi_max:
        errs.append("xi_min/xi_max: xi_min must be below xi_max")
    if not spec.T > 0:
        errs.append("T must be positive")
    if not spec.beta > 0:
        errs.append("beta must be positive")
    if not spec.gamma > 0:
        errs.append("gamma must be positive")
    if spec.n_xi < 2:
        errs.append("n_xi must be at least 2")
    if spec.n_t < 2:
        errs.append("n_t must be at least 2")
    if not 0 < spec.cfl <= 1:
        errs.append("cfl must lie in (0, 1]")
    if spec.max_iter < 0:
        errs.append("max_iter must be non-negative")
    if not spec.rel_tol > 0:
        errs.append("rel_tol must be positive")
    errs.extend(spec.armijo.problems())
    if not errs:
        vals = np.asarray(spec.g0(spec.centers()), dtype=float)
        if (vals < 0).any() or not np.isfinite(vals).all():
            errs.append("g0 must be finite and non-negative")
        elif vals.sum() <= 0:
            errs.append("g0 has no mass on the grid")
    return errs


def leader_running_cost(spec: ProblemSpec, v, m, t):
    """Leader integrand J^L(v, m; t) + beta/2 v^2."""
    return spec.leader_obj.value(v, m, t) + 0.5 * spec.beta * np.square(v)


def follower_cost_and_grads(spec: ProblemSpec, xi, v):
    """J^F(m(xi), v) and its partials in m and v, evaluated at m = m(xi)."""
    m = spec.moment.value(xi)
    fo = spec.follower_obj
    return fo.value(m, v), fo.grad_m(m, v), fo.grad_v(m, v)
