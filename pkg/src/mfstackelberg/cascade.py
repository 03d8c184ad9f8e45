"""Sequential solve of the mean-field optimality system for a fixed leader control.

With no follower interaction the four transport equations decouple into a
cascade:

1. ``q = grad Psi``   backward:  q_t + (q^2/(2 gamma) - J^F(m(xi), v))_xi = 0,  q(T) = 0
2. ``g``              forward:   g_t + (q g / gamma)_xi = 0,                   g(0) = g0
3. ``p = grad Phi_1`` backward:  p_t + (p q / gamma - dJ^L/dm * m(xi))_xi = 0, p(T) = 0
4. ``phi2``           forward:   phi2_t + (q phi2 / gamma - p g / gamma)_xi = 0, phi2(0) = 0

The leader gradient is then ``dJ^L/dv + beta v - int dJ^F/dv phi2 dxi``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fv import (
    BlowUpError,
    CellField,
    FieldTrajectory,
    PeriodicGrid1D,
    QuadraticFlux,
    TimeSeries,
    solve_backward,
    solve_forward,
)
from .problem import ProblemSpec


class CascadeError(RuntimeError):
    """A stage of the cascade failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class MfocSolution:
    q: FieldTrajectory
    g: FieldTrajectory
    p: FieldTrajectory
    phi2: FieldTrajectory
    m_g: TimeSeries
    gamma: float

    @property
    def w(self) -> FieldTrajectory:
        """Follower feedback control q / gamma."""
        return FieldTrajectory(self.q.times, self.q.data / self.gamma, self.q.grid)


def _check(spec: ProblemSpec) -> PeriodicGrid1D:
    if not spec.kernel.is_zero:
        raise ValueError("the sequential cascade requires a zero interaction kernel")
    grid = PeriodicGrid1D.of(spec)
    if spec.gamma < 10 * grid.dxi:
        warnings.warn(
            f"gamma={spec.gamma:g} is small against dxi={grid.dxi:g}; explicit stepping may need many steps",
            RuntimeWarning,
            stacklevel=3,
        )
    return grid


def solve_psi_gradient(spec: ProblemSpec, v: TimeSeries) -> FieldTrajectory:
    grid = _check(spec)
    m_xi = spec.moment.value(grid.centers)
    jf = spec.follower_obj.value

    def c(t):
        return -np.broadcast_to(jf(m_xi, float(v(t))), m_xi.shape)

    model = QuadraticFlux(a=0.5 / spec.gamma, c=c)
    qT = CellField(np.zeros(grid.n_xi), grid)
    return solve_backward(qT, model, None, None, 0.0, spec.T, spec.times, spec.cfl, spec.T / spec.n_t)


def solve_density(spec: ProblemSpec, q: FieldTrajectory) -> FieldTrajectory:
    grid = PeriodicGrid1D.of(spec)
    inv_gamma = 1.0 / spec.gamma
    model = QuadraticFlux(s=lambda t: q.at(t) * inv_gamma)
    g0 = CellField(spec.initial_density(), grid)
    return solve_forward(g0, model, None, None, 0.0, spec.T, spec.times, spec.cfl, spec.T / spec.n_t)


def solve_phi1_gradient(spec: ProblemSpec, v: TimeSeries, q: FieldTrajectory, m_g: TimeSeries) -> FieldTrajectory:
    """Backward solve for p = grad Phi_1.

    The forcing dJ^L/dm * m'(xi) is written as the flux term
    -(dJ^L/dm * m(xi))_xi.  In the interior the two agree; at the wrap point
    the flux form keeps the jump of the periodically extended moment map,
    which is what makes p the gradient of a periodic Phi_1 and the descent
    direction consistent with the discrete objective.
    """
    grid = PeriodicGrid1D.of(spec)
    inv_gamma = 1.0 / spec.gamma
    m_xi = np.broadcast_to(spec.moment.value(grid.centers), (grid.n_xi,))
    gm = spec.leader_obj.grad_m

    def c(t):
        return -float(gm(float(v(t)), float(m_g(t)), t)) * m_xi

    model = QuadraticFlux(s=lambda t: q.at(t) * inv_gamma, c=c)
    pT = CellField(np.zeros(grid.n_xi), grid)
    return solve_backward(pT, model, None, None, 0.0, spec.T, spec.times, spec.cfl, spec.T / spec.n_t)


def solve_phi2(spec: ProblemSpec, q: FieldTrajectory, p: FieldTrajectory, g: FieldTrajectory) -> FieldTrajectory:
    grid = PeriodicGrid1D.of(spec)
    inv_gamma = 1.0 / spec.gamma
    model = QuadraticFlux(
        s=lambda t: q.at(t) * inv_gamma,
        c=lambda t: -(p.at(t) * g.at(t)) * inv_gamma,
    )
    phi0 = CellField(np.zeros(grid.n_xi), grid)
    return solve_forward(phi0, model, None, None, 0.0, spec.T, spec.times, spec.cfl, spec.T / spec.n_t)


def moment_curve(spec: ProblemSpec, g: FieldTrajectory) -> TimeSeries:
    weights = spec.moment.value(g.grid.centers) * g.grid.dxi
    return TimeSeries(g.times, g.data @ weights)


def descent_direction(spec: ProblemSpec, v: TimeSeries, m_g: TimeSeries, phi2: FieldTrajectory) -> TimeSeries:
    """Negative reduced gradient of the leader objective on the output grid."""
    t = v.times
    m_xi = spec.moment.value(phi2.grid.centers)
    # int dJ^F/dv(m(xi), v(t)) phi2(t, xi) dxi for every output time
    jfv = spec.follower_obj.grad_v(m_xi[None, :], v.values[:, None])
    coupling = np.sum(np.broadcast_to(jfv, phi2.data.shape) * phi2.data, axis=1) * phi2.grid.dxi
    grad = spec.leader_obj.grad_v(v.values, m_g.values, t) + spec.beta * v.values - coupling
    return TimeSeries(t, -np.asarray(grad, dtype=float))


def leader_objective(spec: ProblemSpec, v: TimeSeries, m_g: TimeSeries) -> float:
    """Left-endpoint rule for int_0^T J^L + beta/2 v^2 dt."""
    t = v.times[:-1]
    dt = (v.times[-1] - v.times[0]) / (len(v.times) - 1)
    vals = spec.leader_obj.value(v.values[:-1], m_g.values[:-1], t) + 0.5 * spec.beta * v.values[:-1] ** 2
    return float(np.sum(vals) * dt)


def run_cascade(spec: ProblemSpec, v: TimeSeries) -> MfocSolution:
    stage = "psi_gradient"
    try:
        q = solve_psi_gradient(spec, v)
        stage = "density"
        g = solve_density(spec, q)
        m_g = moment_curve(spec, g)
        stage = "phi1_gradient"
        p = solve_phi1_gradient(spec, v, q, m_g)
        stage = "phi2"
        phi2 = solve_phi2(spec, q, p, g)
    except (BlowUpError, FloatingPointError) as exc:
        raise CascadeError(stage, exc) from exc
    return MfocSolution(q=q, g=g, p=p, phi2=phi2, m_g=m_g, gamma=spec.gamma)


def reduced_objective(spec: ProblemSpec, v: TimeSeries) -> float:
    sol = run_cascade(spec, v)
    return leader_objective(spec, v, sol.m_g)
