"""Periodic 1-D finite volumes: Lax-Friedrichs stepping on an adaptive CFL clock.

Every transport equation handled here has the form

    u_t + (f(u, xi, t))_xi = S(xi, t)

on a periodic interval.  Backward problems are solved in reversed time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels


# steps shorter than this fraction of the horizon count as a stiff blow-up
MIN_STEP_FRACTION = 1e-9


class BlowUpError(RuntimeError):
    """A transport solve produced non-finite values."""


@dataclass(frozen=True)
class PeriodicGrid1D:
    xi_min: float
    xi_max: float
    n_xi: int

    @property
    def dxi(self) -> float:
        return (self.xi_max - self.xi_min) / self.n_xi

    @property
    def centers(self) -> np.ndarray:
        return self.xi_min + (np.arange(self.n_xi) + 0.5) * self.dxi

    @property
    def length(self) -> float:
        return self.xi_max - self.xi_min

    def wrap(self, xi):
        return self.xi_min + np.mod(np.asarray(xi, dtype=float) - self.xi_min, self.length)

    @classmethod
    def of(cls, spec) -> "PeriodicGrid1D":
        return cls(spec.xi_min, spec.xi_max, spec.n_xi)


@dataclass(frozen=True)
class CellField:
    values: np.ndarray
    grid: PeriodicGrid1D

    def __post_init__(self):
        if np.shape(self.values) != (self.grid.n_xi,):
            raise ValueError(f"expected {self.grid.n_xi} cell values, got shape {np.shape(self.values)}")


@dataclass(frozen=True)
class TimeSeries:
    """Scalar function of time on a uniform grid, piecewise linear in between."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @classmethod
    def sample(cls, fn: Callable, times: np.ndarray) -> "TimeSeries":
        vals = np.asarray(fn(times), dtype=float)
        return cls(times, np.broadcast_to(vals, times.shape).copy())

    def norm(self) -> float:
        """Discrete L2 norm on the grid."""
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class FieldTrajectory:
    """Cell fields at uniformly spaced output times; ``data[k]`` is the field at ``times[k]``."""

    times: np.ndarray
    data: np.ndarray
    grid: PeriodicGrid1D

    def __post_init__(self):
        if self.data.shape != (len(self.times), self.grid.n_xi):
            raise ValueError("snapshot array does not match times x cells")

    @property
    def n_t(self) -> int:
        return len(self.times)

    def snapshot(self, k: int) -> CellField:
        return CellField(self.data[k], self.grid)

    def at(self, t: float) -> np.ndarray:
        """Field at time ``t`` by linear interpolation between snapshots."""
        t0, t1 = self.times[0], self.times[-1]
        s = (min(max(t, t0), t1) - t0) / (t1 - t0) * (self.n_t - 1)
        k = min(int(s), self.n_t - 2)
        theta = s - k
        if theta == 0.0:
            return self.data[k]
        if theta == 1.0:
            return self.data[k + 1]
        return (1.0 - theta) * self.data[k] + theta * self.data[k + 1]

    def lookup(self, t: float, xs: np.ndarray) -> np.ndarray:
        """Bilinear value at time ``t`` and (periodically wrapped) positions ``xs``."""
        g = self.grid
        step = (self.times[-1] - self.times[0]) / (self.n_t - 1)
        return _kernels.periodic_lookup(self.data, float(self.times[0]), step, g.xi_min, g.dxi, float(t),
                                        np.ascontiguousarray(xs, dtype=float))

    def masses(self) -> np.ndarray:
        return self.data.sum(axis=1) * self.grid.dxi

    def scaled(self, factor: float) -> "FieldTrajectory":
        return FieldTrajectory(self.times, self.data * factor, self.grid)


# --------------------------------------------------------------------------
# elementary operations
# --------------------------------------------------------------------------


def cfl_dt(max_speed: float, dxi: float, cfl: float, cap: float) -> float:
    """Largest stable step ``cfl * dxi / max_speed``, never above ``cap``."""
    if not math.isfinite(max_speed) or max_speed < 0:
        raise ValueError(f"wave speed must be finite and non-negative, got {max_speed}")
    if not dxi > 0 or not 0 < cfl <= 1:
        raise ValueError("need dxi > 0 and cfl in (0, 1]")
    if max_speed == 0.0:
        return cap
    return min(cfl * dxi / max_speed, cap)


def lf_step(u: CellField, flux: Callable, source: Callable, t: float, dt: float) -> CellField:
    """Conservative Lax-Friedrichs update of ``u`` over ``dt``.

    ``flux(u_values, xi, t)`` and ``source(xi, t)`` are evaluated on the whole grid.
    """
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    xi = u.grid.centers
    f = np.broadcast_to(np.asarray(flux(u.values, xi, t), dtype=float), xi.shape)
    src = np.broadcast_to(np.asarray(source(xi, t), dtype=float), xi.shape)
    out, finite = _kernels.lf_update(np.ascontiguousarray(u.values, dtype=float), np.ascontiguousarray(f),
                                     np.ascontiguousarray(src), float(dt), u.grid.dxi)
    if not finite:
        raise BlowUpError(f"non-finite value after LF step at t={t:.6g}")
    return CellField(out, u.grid)


def quadrature(f: CellField) -> float:
    return float(np.sum(f.values) * f.grid.dxi)


def first_moment(f: CellField, moment) -> float:
    return float(np.sum(moment.value(f.grid.centers) * f.values) * f.grid.dxi)


# --------------------------------------------------------------------------
# time marching
# --------------------------------------------------------------------------


@dataclass
class QuadraticFlux:
    """Flux ``a u^2 + s(t) u + c(t)`` with source ``src(t)``.

    ``s``, ``c`` and ``src`` are callables of time returning cell arrays (or
    ``None`` for zero).  This form covers all four optimality equations and
    runs through the fused kernel.
    """

    a: float = 0.0
    s: Callable | None = None
    c: Callable | None = None
    src: Callable | None = None


class _GeneralFlux:
    """Adapter for arbitrary ``flux(u, xi, t)``, ``source(xi, t)`` callables."""

    def __init__(self, flux, source, speed_bound):
        self.flux, self.source, self.speed_bound = flux, source, speed_bound


def _march(u0: np.ndarray, grid: PeriodicGrid1D, model, t_start: float, t_end: float,
           sample_times: np.ndarray, cfl: float, dt_cap: float, sign: float) -> np.ndarray:
    """March from ``t_start`` towards ``t_end`` (``sign`` = +1 forward, -1 backward in physical time).

    ``sample_times`` are ordered in the marching direction; ``sample_times[0]``
    must equal ``t_start``.  Returns snapshots in that order.
    """
    dx = grid.dxi
    n = grid.n_xi
    zeros = np.zeros(n)
    out = np.empty((len(sample_times), n))
    u = np.array(u0, dtype=float)
    out[0] = u
    nxt = 1
    tau, tau_end = 0.0, abs(t_end - t_start)
    xi = grid.centers
    general = isinstance(model, _GeneralFlux)
    while nxt < len(sample_times):
        t = t_start + sign * tau
        if general:
            speed = float(model.speed_bound(u, t))
        else:
            s = model.s(t) if model.s is not None else zeros
            speed = _kernels.max_speed_quadratic(u, model.a, s)
        if not math.isfinite(speed):
            raise BlowUpError(f"non-finite wave speed at t={t:.6g}")
        dt = cfl_dt(speed, dx, cfl, dt_cap)
        if dt < MIN_STEP_FRACTION * tau_end and tau_end - tau > dt:
            raise BlowUpError(f"time step collapsed to {dt:.3g} near t={t:.6g} (wave speed {speed:.3g})")
        # no characteristic moves: drop the LF viscosity so pure forcing
        # does not smear the field
        nu = 1.0 if speed > 0.0 else 0.0
        if tau_end - (tau + dt) < 1e-12 * max(tau_end, 1.0):
            dt = tau_end - tau
        if general:
            f = np.broadcast_to(np.asarray(model.flux(u, xi, t), dtype=float), (n,))
            src = np.broadcast_to(np.asarray(model.source(xi, t), dtype=float), (n,))
            new, finite = _kernels.lf_update(u, sign * np.ascontiguousarray(f), sign * np.ascontiguousarray(src),
                                             dt, dx, nu)
        else:
            c = model.c(t) if model.c is not None else zeros
            src = model.src(t) if model.src is not None else zeros
            # reversed time negates flux and source
            new, finite = _kernels.lf_update_quadratic(u, sign * model.a, sign * s, sign * c, sign * src, dt, dx, nu)
        if not finite:
            raise BlowUpError(f"non-finite value during transport solve near t={t:.6g}")
        tau_new = tau + dt
        last = tau_new >= tau_end
        slack = 1e-12 * max(tau_end, 1.0)
        while nxt < len(sample_times):
            target = abs(sample_times[nxt] - t_start)
            if target > tau_new + slack:
                break
            theta = (target - tau) / dt
            if theta >= 1.0 - 1e-12:
                out[nxt] = new
            else:
                out[nxt] = u + theta * (new - u)
            nxt += 1
        u, tau = new, tau_new
        if last:
            break
    if nxt < len(sample_times):
        out[nxt:] = u
    return out


def _as_model(flux, source, speed_bound):
    if isinstance(flux, QuadraticFlux):
        return flux
    return _GeneralFlux(flux, source, speed_bound)


def solve_forward(u0: CellField, flux, source, speed_bound, t_start: float, t_end: float,
                  sample_times, cfl: float = 0.95, dt_cap: float | None = None) -> FieldTrajectory:
    """March ``u0`` forward with adaptive CFL steps, recording ``sample_times``.

    ``flux`` is either a ``QuadraticFlux`` (``source``/``speed_bound`` ignored)
    or a callable ``flux(u, xi, t)`` used together with ``source(xi, t)`` and
    ``speed_bound(u, t)``.
    """
    if not t_start < t_end:
        raise ValueError("need t_start < t_end")
    times = np.asarray(sample_times, dtype=float)
    if times[0] != t_start or times[-1] > t_end:
        raise ValueError("sample times must start at t_start and stay within [t_start, t_end]")
    cap = dt_cap if dt_cap is not None else (t_end - t_start) / len(times)
    data = _march(u0.values, u0.grid, _as_model(flux, source, speed_bound), t_start, t_end, times, cfl, cap, +1.0)
    return FieldTrajectory(times, data, u0.grid)


def solve_backward(uT: CellField, flux, source, speed_bound, t_start: float, t_end: float,
                   sample_times, cfl: float = 0.95, dt_cap: float | None = None) -> FieldTrajectory:
    """Solve ``u_t + f_xi = S`` backward from the terminal datum ``uT`` at ``t_end``.

    Internally marches ``tau = t_end - t`` forward with flux and source negated;
    the result is indexed by ascending physical time.
    """
    if not t_start < t_end:
        raise ValueError("need t_start < t_end")
    times = np.asarray(sample_times, dtype=float)
    if times[-1] != t_end or times[0] < t_start:
        raise ValueError("sample times must end at t_end and stay within [t_start, t_end]")
    cap = dt_cap if dt_cap is not None else (t_end - t_start) / len(times)
    data = _march(uT.values, uT.grid, _as_model(flux, source, speed_bound), t_end, t_start, times[::-1], cfl, cap,
                  -1.0)
    return FieldTrajectory(times, data[::-1].copy(), uT.grid)
