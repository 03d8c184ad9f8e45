"""N-agent oracle for the mean-field solution.

Each follower's Pontryagin system (state xi, costate psi)

    xi'  = -psi / gamma,              xi(0) = xi0
    psi' = -m'(xi) dJ^F/dm(m(xi), v), psi(T) = 0

is solved by single shooting on psi(0).  Along optimal paths the costate
should equal minus the mean-field adjoint gradient, psi = -q(t, xi(t)); that
identity and the zero spread of psi among followers sharing an initial state
are what ``consistency_residual`` measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cascade import MfocSolution
from .fv import CellField, FieldTrajectory, PeriodicGrid1D, TimeSeries
from .problem import ProblemSpec

SHOOT_MAX_ITER = 50
SHOOT_TOL = 1e-11
SINGULAR_SENSITIVITY = 1e-10


class ShootingError(RuntimeError):
    pass


@dataclass
class ParticleEnsemble:
    xi: np.ndarray
    psi: np.ndarray
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    xi_traj: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    psi_traj: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    @property
    def n(self) -> int:
        return self.xi.shape[0]


def _substeps(n_t: int) -> int:
    # at least 4 * n_t RK4 steps over the horizon
    return max(1, math.ceil(4 * n_t / (n_t - 1)))


# --------------------------------------------------------------------------
# follower two-point boundary value problem
# --------------------------------------------------------------------------


def _integrate_pmp(spec: ProblemSpec, v: TimeSeries, xi0: np.ndarray, psi0: np.ndarray):
    """RK4 for the follower state/costate pair; trajectories on the output grid."""
    times = spec.times
    nsub = _substeps(spec.n_t)
    h = spec.dt_out / nsub
    inv_gamma = 1.0 / spec.gamma
    dm, mv, gm = spec.moment.derivative, spec.moment.value, spec.follower_obj.grad_m

    def rhs(t, x, p):
        vt = float(v(t))
        return -p * inv_gamma, -dm(x) * gm(mv(x), vt)

    x, p = xi0.astype(float).copy(), psi0.astype(float).copy()
    xs = np.empty((len(times), x.size))
    ps = np.empty_like(xs)
    xs[0], ps[0] = x, p
    for k in range(len(times) - 1):
        t = times[k]
        for j in range(nsub):
            tj = t + j * h
            k1x, k1p = rhs(tj, x, p)
            k2x, k2p = rhs(tj + 0.5 * h, x + 0.5 * h * k1x, p + 0.5 * h * k1p)
            k3x, k3p = rhs(tj + 0.5 * h, x + 0.5 * h * k2x, p + 0.5 * h * k2p)
            k4x, k4p = rhs(tj + h, x + h * k3x, p + h * k3p)
            x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            p = p + (h / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
        xs[k + 1], ps[k + 1] = x, p
    return xs, ps


def solve_tpbvp_batch(spec: ProblemSpec, xi0, v: TimeSeries):
    """Shoot every follower at once.

    Returns ``(xi_traj, psi_traj, status)``; trajectories have shape
    ``(n_t, n)`` and ``status[i]`` is ``""`` on success or an error message
    (failed columns are NaN).
    """
    if not spec.kernel.is_zero:
        raise ValueError("follower shooting requires a zero interaction kernel")
    xi0 = np.atleast_1d(np.asarray(xi0, dtype=float))
    n = xi0.size
    status = np.array([""] * n, dtype=object)
    if n == 0:
        empty = np.empty((spec.n_t, 0))
        return empty, empty.copy(), status

    s_prev = np.zeros(n)
    _, ps = _integrate_pmp(spec, v, xi0, s_prev)
    f_prev = ps[-1]
    s_cur = s_prev + 1.0
    active = np.abs(f_prev) > SHOOT_TOL
    s_cur[~active] = s_prev[~active]
    for _ in range(SHOOT_MAX_ITER):
        if not active.any():
            break
        _, ps = _integrate_pmp(spec, v, xi0[active], s_cur[active])
        f_cur = np.full(n, 0.0)
        f_cur[active] = ps[-1]
        idx = np.flatnonzero(active)
        sens = (f_cur[idx] - f_prev[idx]) / (s_cur[idx] - s_prev[idx])
        bad = ~np.isfinite(sens) | (np.abs(sens) < SINGULAR_SENSITIVITY)
        for i in idx[bad]:
            status[i] = "shooting singular: psi(T) insensitive to psi(0) (conjugate point)"
        done = np.abs(f_cur[idx]) <= SHOOT_TOL
        step = np.where(bad | done, 0.0, f_cur[idx] / np.where(bad, 1.0, sens))
        s_prev[idx], f_prev[idx] = s_cur[idx], f_cur[idx]
        s_cur[idx] = s_cur[idx] - step
        active[idx[bad | done]] = False
    else:
        for i in np.flatnonzero(active):
            status[i] = f"shooting did not converge in {SHOOT_MAX_ITER} iterations"

    xs, ps = _integrate_pmp(spec, v, xi0, s_prev)
    failed = status != ""
    xs[:, failed] = np.nan
    ps[:, failed] = np.nan
    return xs, ps, status


def solve_follower_tpbvp(spec: ProblemSpec, xi0: float, v: TimeSeries):
    """Single follower; returns ``(xi_traj, psi_traj)`` on the output grid."""
    xs, ps, status = solve_tpbvp_batch(spec, [xi0], v)
    if status[0]:
        raise ShootingError(status[0])
    return xs[:, 0], ps[:, 0]


# --------------------------------------------------------------------------
# forward particle push and sampling
# --------------------------------------------------------------------------


def sample_initial(spec: ProblemSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` states from the piecewise-constant initial density (inverse CDF)."""
    grid = PeriodicGrid1D.of(spec)
    g0 = spec.initial_density()
    cdf = np.concatenate(([0.0], np.cumsum(g0) * grid.dxi))
    cdf /= cdf[-1]
    u = np.random.default_rng(seed).random(n)
    j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, grid.n_xi - 1)
    # skip zero-mass cells: searchsorted lands right of flat CDF stretches
    frac = (u - cdf[j]) / np.where(g0[j] > 0, cdf[j + 1] - cdf[j], 1.0)
    return grid.xi_min + (j + np.clip(frac, 0.0, 1.0)) * grid.dxi


def _interaction(spec: ProblemSpec, x: np.ndarray) -> np.ndarray:
    if spec.kernel.is_zero or x.size == 0:
        return np.zeros_like(x)
    diff = x[None, :] - x[:, None]  # xi_j - xi_i
    return np.mean(spec.kernel.value(x[:, None], x[None, :]) * diff, axis=1)


def push_particles(spec: ProblemSpec, ensemble: ParticleEnsemble, w: FieldTrajectory) -> ParticleEnsemble:
    """Integrate xi_i' = mean_j P(xi_i, xi_j)(xi_j - xi_i) + w(t, xi_i) with RK4."""
    grid = PeriodicGrid1D.of(spec)
    times = spec.times
    nsub = _substeps(spec.n_t)
    h = spec.dt_out / nsub
    x = grid.wrap(ensemble.xi)
    traj = np.empty((len(times), x.size))
    traj[0] = x

    def vel(t, y):
        return _interaction(spec, y) + w.lookup(t, y)

    for k in range(len(times) - 1):
        for j in range(nsub):
            t = times[k] + j * h
            k1 = vel(t, x)
            k2 = vel(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = vel(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = vel(t + h, x + h * k3)
            x = grid.wrap(x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
            if not np.isfinite(x).all():
                raise FloatingPointError(f"non-finite particle state near t={t:.6g}")
        traj[k + 1] = x
    psi = np.asarray(ensemble.psi, dtype=float)
    return ParticleEnsemble(xi=x, psi=psi, times=times, xi_traj=traj,
                            psi_traj=np.broadcast_to(psi, traj.shape).copy())


def empirical_density(positions, grid: PeriodicGrid1D) -> CellField:
    """Histogram normalized to unit mass: count_i / (n dxi)."""
    xs = positions.xi if isinstance(positions, ParticleEnsemble) else np.asarray(positions, dtype=float)
    n = xs.size
    if n == 0:
        return CellField(np.zeros(grid.n_xi), grid)
    j = np.floor((grid.wrap(xs) - grid.xi_min) / grid.dxi).astype(np.int64)
    j = np.clip(j, 0, grid.n_xi - 1)
    counts = np.bincount(j, minlength=grid.n_xi)
    return CellField(counts / (n * grid.dxi), grid)


# --------------------------------------------------------------------------
# consistency diagnostics
# --------------------------------------------------------------------------


@dataclass
class ConsistencyReport:
    xi0: np.ndarray
    residual: np.ndarray  # per sample, NaN where shooting failed
    profile: np.ndarray  # per output time, max over samples
    errors: dict
    duplicate_spread: float  # max |psi_a - psi_b| over samples sharing xi0
    xi_traj: np.ndarray
    psi_traj: np.ndarray

    @property
    def max(self) -> float:
        ok = self.residual[np.isfinite(self.residual)]
        return float(ok.max()) if ok.size else float("nan")

    @property
    def mean(self) -> float:
        ok = self.residual[np.isfinite(self.residual)]
        return float(ok.mean()) if ok.size else float("nan")


def consistency_residual(spec: ProblemSpec, solution: MfocSolution, xi0_samples, v: TimeSeries) -> ConsistencyReport:
    """Compare follower costates with -q along their own optimal paths."""
    xi0 = np.atleast_1d(np.asarray(xi0_samples, dtype=float))
    xs, ps, status = solve_tpbvp_batch(spec, xi0, v)
    n_t = spec.n_t
    gaps = np.empty((n_t, xi0.size))
    for k, t in enumerate(spec.times):
        row = xs[k]
        ok = np.isfinite(row)
        gaps[k] = np.nan
        if ok.any():
            gaps[k, ok] = np.abs(ps[k, ok] + solution.q.lookup(t, row[ok]))
    residual = np.max(gaps, axis=0) if xi0.size else np.empty(0)
    with np.errstate(all="ignore"):
        profile = np.nanmax(gaps, axis=1) if xi0.size and np.isfinite(gaps).any() else np.full(n_t, np.nan)
    spread = 0.0
    for val in np.unique(xi0):
        cols = np.flatnonzero(xi0 == val)
        if cols.size > 1:
            block = ps[:, cols]
            spread = max(spread, float(np.nanmax(block.max(axis=1) - block.min(axis=1))))
    errors = {int(i): status[i] for i in range(xi0.size) if status[i]}
    return ConsistencyReport(xi0, residual, profile, errors, spread, xs, ps)


def density_gap(spec: ProblemSpec, solution: MfocSolution, n: int, seed: int,
                w: FieldTrajectory | None = None) -> tuple[np.ndarray, np.ndarray]:
    """L1 distance between the particle histogram and g at every output time."""
    grid = PeriodicGrid1D.of(spec)
    w = solution.w if w is None else w
    xi0 = sample_initial(spec, n, seed)
    pushed = push_particles(spec, ParticleEnsemble(xi0, np.zeros(n)), w)
    gaps = np.array([
        np.sum(np.abs(empirical_density(pushed.xi_traj[k], grid).values - solution.g.data[k])) * grid.dxi
        for k in range(spec.n_t)
    ])
    return spec.times.copy(), gaps
