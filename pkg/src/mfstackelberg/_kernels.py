"""Hot loops of the solver: Lax-Friedrichs updates and periodic field lookup.

Each kernel has a numba version and a pure-numpy version with identical
signatures.  The numba path is used when numba imports and the environment
variable ``MFSTACK_DISABLE_NUMBA`` is unset or ``0``.  Both paths are always
importable under the ``numpy_*`` / ``numba_*`` names so they can be compared
directly (see ``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("MFSTACK_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------


def numpy_lf_update(u, f, src, dt, dx, nu=1.0):
    """One conservative LF step from precomputed cell fluxes ``f``.

    ``nu`` scales the viscosity ``dx/(2 dt)``: 1 is Lax-Friedrichs, 0 the
    centered flux (used only when nothing is transported).
    Returns ``(u_new, finite)``.
    """
    up = np.roll(u, -1)
    # F_{i+1/2}
    flux = 0.5 * (f + np.roll(f, -1)) - (nu * 0.5 * dx / dt) * (up - u)
    out = u - (dt / dx) * (flux - np.roll(flux, 1)) + dt * src
    return out, bool(np.isfinite(out).all())


def numpy_lf_update_quadratic(u, a, s, c, src, dt, dx, nu=1.0):
    """LF step for the flux ``a*u**2 + s*u + c`` (``s``, ``c``, ``src`` per cell)."""
    f = (a * u + s) * u + c
    return numpy_lf_update(u, f, src, dt, dx, nu)


def numpy_max_speed_quadratic(u, a, s):
    return float(np.max(np.abs(2.0 * a * u + s))) if u.size else 0.0


def numpy_periodic_lookup(table, t0, t_step, xi_min, dxi, t, xs):
    """Bilinear lookup of a (time, cell-center) table at time ``t``, positions ``xs``.

    Time is clamped to the table range; space wraps periodically.
    """
    n_t, n_xi = table.shape
    s = (t - t0) / t_step
    k = int(np.floor(s))
    if k < 0:
        k, theta = 0, 0.0
    elif k >= n_t - 1:
        k, theta = n_t - 2, 1.0
    else:
        theta = s - k
    row = (1.0 - theta) * table[k] + theta * table[k + 1]
    r = (xs - xi_min) / dxi - 0.5
    j = np.floor(r)
    lam = r - j
    j0 = j.astype(np.int64) % n_xi
    j1 = (j0 + 1) % n_xi
    return (1.0 - lam) * row[j0] + lam * row[j1]


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def numba_lf_update(u, f, src, dt, dx, nu=1.0):
        n = u.shape[0]
        out = np.empty(n)
        lam = dt / dx
        visc = nu * 0.5 * dx / dt
        # F_{-1/2} == F_{n-1/2} under periodic wrap
        f_left = 0.5 * (f[n - 1] + f[0]) - visc * (u[0] - u[n - 1])
        finite = True
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            f_right = 0.5 * (f[i] + f[ip]) - visc * (u[ip] - u[i])
            val = u[i] - lam * (f_right - f_left) + dt * src[i]
            if not np.isfinite(val):
                finite = False
            out[i] = val
            f_left = f_right
        return out, finite

    @njit(cache=True)
    def numba_lf_update_quadratic(u, a, s, c, src, dt, dx, nu=1.0):
        n = u.shape[0]
        f = np.empty(n)
        for i in range(n):
            f[i] = (a * u[i] + s[i]) * u[i] + c[i]
        return numba_lf_update(u, f, src, dt, dx, nu)

    @njit(cache=True)
    def numba_max_speed_quadratic(u, a, s):
        m = 0.0
        for i in range(u.shape[0]):
            v = abs(2.0 * a * u[i] + s[i])
            if v > m:
                m = v
        return m

    @njit(cache=True)
    def numba_periodic_lookup(table, t0, t_step, xi_min, dxi, t, xs):
        n_t, n_xi = table.shape
        s = (t - t0) / t_step
        k = int(np.floor(s))
        if k < 0:
            k = 0
            theta = 0.0
        elif k >= n_t - 1:
            k = n_t - 2
            theta = 1.0
        else:
            theta = s - k
        out = np.empty(xs.shape[0])
        for p in range(xs.shape[0]):
            r = (xs[p] - xi_min) / dxi - 0.5
            jf = np.floor(r)
            lam = r - jf
            j0 = int(jf) % n_xi
            j1 = (j0 + 1) % n_xi
            lo = (1.0 - theta) * table[k, j0] + theta * table[k + 1, j0]
            hi = (1.0 - theta) * table[k, j1] + theta * table[k + 1, j1]
            out[p] = (1.0 - lam) * lo + lam * hi
        return out


if HAVE_NUMBA and not _DISABLE:
    BACKEND = "numba"
    lf_update = numba_lf_update
    lf_update_quadratic = numba_lf_update_quadratic
    max_speed_quadratic = numba_max_speed_quadratic
    periodic_lookup = numba_periodic_lookup
else:
    BACKEND = "numpy"
    lf_update = numpy_lf_update
    lf_update_quadratic = numpy_lf_update_quadratic
    max_speed_quadratic = numpy_max_speed_quadratic
    periodic_lookup = numpy_periodic_lookup
