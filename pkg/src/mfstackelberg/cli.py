"""Command-line front end: ``solve``, ``particles``, ``gradcheck``, ``sweep``."""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .cascade import CascadeError, descent_direction, reduced_objective, run_cascade
from .config import ConfigError, ExperimentConfig, parse_float_list, parse_int_list
from .fv import TimeSeries
from .optimize import CONVERGED, LINE_SEARCH_FAILED, MAX_ITER, SOLVER_ERROR, optimize
from .particles import consistency_residual, density_gap, sample_initial
from .problem import validate

log = logging.getLogger("mfstackelberg")

EXIT_OK, EXIT_CONFIG, EXIT_LINE_SEARCH, EXIT_SOLVER = 0, 1, 2, 3
STATUS_EXIT = {CONVERGED: EXIT_OK, MAX_ITER: EXIT_OK, LINE_SEARCH_FAILED: EXIT_LINE_SEARCH, SOLVER_ERROR: EXIT_SOLVER}

SCHEMAS = """\
output files (UTF-8, LF line endings, '%.17g' numbers):
  solve      control.csv      t,v_initial,v_star
             convergence.csv  iter,objective,step_size,rel_change,wall_ms
             w.csv g.csv phi1_grad.csv phi2.csv   t,xi,value  (n_t x n_xi rows, t-major)
  particles  consistency.csv  sample_id,xi0,max_residual
             density_gap.csv  t,l1_gap
             particles.csv    t,sample_id,xi,psi
  gradcheck  gradcheck.csv    t_index,adjoint_d,fd_d,rel_err
  sweep      sweep.csv        beta,gamma,n_xi,iterations,final_objective,wall_ms
             error.csv        n_xi,l2_err_vs_finest     (one beta/gamma pair, >=2 n_xi values)
             sweep_nt.csv     n_t,iterations,final_objective,wall_ms
             error_nt.csv     n_t,l2_err_vs_finest      (>=2 n_t values)

exit codes: 0 converged or max_iter, 1 configuration error,
            2 line search failed, 3 solver error
"""


# --------------------------------------------------------------------------
# csv
# --------------------------------------------------------------------------


def write_csv(path: Path, header: list[str], columns: list, int_cols: tuple[int, ...] = ()) -> None:
    """Write equal-length columns; ``int_cols`` are written as integers."""
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0]) if cols else 0
    fmt = ["%d" if i in int_cols else "%.17g" for i in range(len(header))]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        if n:
            table = np.column_stack([c.astype(float) for c in cols])
            if not np.isfinite(table).all():
                raise ValueError(f"non-finite value in {path.name}")
            np.savetxt(fh, table, fmt=fmt, delimiter=",", newline="\n")


def write_field(path: Path, traj) -> None:
    t = np.repeat(traj.times, traj.grid.n_xi)
    xi = np.tile(traj.grid.centers, traj.n_t)
    write_csv(path, ["t", "xi", "value"], [t, xi, traj.data.ravel()])


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_solve(cfg: ExperimentConfig, out: Path) -> int:
    spec = cfg.spec()
    start = time.perf_counter()
    res = optimize(spec)
    log.info("solve: %s after %d iterations (%.2fs), J=%.10g", res.status, res.iterations,
             time.perf_counter() - start, res.final_objective)
    write_csv(out / "control.csv", ["t", "v_initial", "v_star"], [spec.times, res.v_initial.values, res.v_star.values])
    hist = res.history
    write_csv(out / "convergence.csv", ["iter", "objective", "step_size", "rel_change", "wall_ms"],
              [[r.iter for r in hist], [r.objective for r in hist], [r.step_size for r in hist],
               [r.rel_change for r in hist], [1e3 * r.wall_time for r in hist]], int_cols=(0,))
    sol = res.solution
    if sol is not None:
        write_field(out / "w.csv", sol.w)
        write_field(out / "g.csv", sol.g)
        write_field(out / "phi1_grad.csv", sol.p)
        write_field(out / "phi2.csv", sol.phi2)
    if res.message:
        print(f"{res.status}: {res.message}", file=sys.stderr)
    return STATUS_EXIT[res.status]


def read_control(path: Path, times: np.ndarray) -> TimeSeries:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return TimeSeries(times, np.interp(times, data[:, 0], data[:, 2]))


def cmd_particles(cfg: ExperimentConfig, out: Path, control: Path | None = None) -> int:
    spec = cfg.spec()
    code = EXIT_OK
    if control is not None:
        v = read_control(control, spec.times)
        try:
            sol = run_cascade(spec, v)
        except CascadeError as exc:
            print(f"{SOLVER_ERROR}: {exc}", file=sys.stderr)
            return EXIT_SOLVER
    else:
        res = optimize(spec)
        code = STATUS_EXIT[res.status]
        if res.solution is None:
            print(f"{res.status}: {res.message}", file=sys.stderr)
            return code
        v, sol = res.v_star, res.solution

    seed = int(cfg.get("particles.seed"))
    explicit = cfg.get("particles.xi0")
    if explicit:
        xi0 = np.array(parse_float_list(explicit))
    else:
        xi0 = sample_initial(spec, int(cfg.get("particles.samples")), seed)
    rep = consistency_residual(spec, sol, xi0, v)
    for i, msg in rep.errors.items():
        log.warning("sample %d: %s", i, msg)
    ok = np.isfinite(rep.residual)
    ids = np.arange(xi0.size)
    write_csv(out / "consistency.csv", ["sample_id", "xi0", "max_residual"],
              [ids[ok], xi0[ok], rep.residual[ok]], int_cols=(0,))
    n_t = spec.n_t
    keep = np.flatnonzero(ok)
    write_csv(out / "particles.csv", ["t", "sample_id", "xi", "psi"],
              [np.repeat(spec.times, keep.size), np.tile(keep, n_t),
               rep.xi_traj[:, keep].ravel(), rep.psi_traj[:, keep].ravel()], int_cols=(1,))

    n = int(cfg.get("particles.n"))
    if n > 0:
        t, gap = density_gap(spec, sol, n, seed)
    else:
        t, gap = np.empty(0), np.empty(0)
    write_csv(out / "density_gap.csv", ["t", "l1_gap"], [t, gap])
    log.info("particles: max residual %.4g over %d samples, duplicate spread %.3g",
             rep.max, int(ok.sum()), rep.duplicate_spread)
    return code


def probe_indices(n_t: int, probes: int) -> np.ndarray:
    if probes <= 0:
        return np.empty(0, dtype=int)
    return np.unique(np.round(np.linspace(1, n_t - 2, probes)).astype(int))


def gradient_check(spec, v: TimeSeries, indices, h: float):
    """Adjoint descent direction vs central differences of the reduced objective."""
    sol = run_cascade(spec, v)
    d = descent_direction(spec, v, sol.m_g, sol.phi2)
    fd = np.empty(len(indices))
    for j, k in enumerate(indices):
        vp, vm = v.values.copy(), v.values.copy()
        vp[k] += h
        vm[k] -= h
        jp = reduced_objective(spec, TimeSeries(v.times, vp))
        jm = reduced_objective(spec, TimeSeries(v.times, vm))
        # a nodal bump carries weight dt in the left-endpoint objective
        fd[j] = -(jp - jm) / (2.0 * h * spec.dt_out)
    ad = d.values[np.asarray(indices, dtype=int)]
    rel = np.abs(ad - fd) / np.maximum(np.abs(fd), np.finfo(float).tiny)
    return ad, fd, rel


def cmd_gradcheck(cfg: ExperimentConfig, out: Path) -> int:
    spec = cfg.spec()
    idx = probe_indices(spec.n_t, int(cfg.get("gradcheck.probes")))
    v = TimeSeries.sample(spec.v0, spec.times)
    try:
        if idx.size:
            ad, fd, rel = gradient_check(spec, v, idx, float(cfg.get("gradcheck.h")))
        else:
            ad = fd = rel = np.empty(0)
    except CascadeError as exc:
        print(f"{SOLVER_ERROR}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_csv(out / "gradcheck.csv", ["t_index", "adjoint_d", "fd_d", "rel_err"], [idx, ad, fd, rel], int_cols=(0,))
    if idx.size:
        log.info("gradcheck: median rel err %.3g", float(np.median(rel)))
    return EXIT_OK


def _sweep_point(values: dict):
    cfg = ExperimentConfig(values)
    spec = cfg.spec()
    start = time.perf_counter()
    res = optimize(spec)
    wall = time.perf_counter() - start
    return res.status, res.iterations, res.final_objective, 1e3 * wall, res.v_star.values, spec.times


def _l2(a: np.ndarray, b: np.ndarray, dt: float) -> float:
    return float(np.sqrt(np.sum((a - b) ** 2) * dt))


def _warm_up(cfg: ExperimentConfig) -> None:
    # compile kernels outside the timed region
    spec = cfg.with_(n_xi=16, n_t=8, max_iter=1, gamma=1.0).spec()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run_cascade(spec, TimeSeries.sample(spec.v0, spec.times))


def cmd_sweep(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    base = cfg.values
    betas = parse_float_list(base["sweep.beta"]) or [float(base["beta"])]
    gammas = parse_float_list(base["sweep.gamma"]) or [float(base["gamma"])]
    nxis = parse_int_list(base["sweep.n_xi"]) or [int(base["n_xi"])]
    nts = parse_int_list(base["sweep.n_t"])
    points = [dict(base, beta=b, gamma=g, n_xi=n) for b, g, n in itertools.product(betas, gammas, nxis)]
    nt_points = [dict(base, beta=betas[0], gamma=gammas[0], n_xi=nxis[0], n_t=m) for m in nts] if len(nts) > 1 else []
    for p in points + nt_points:
        validate_errors = validate(ExperimentConfig(p).spec())
        if validate_errors:
            raise ConfigError("; ".join(validate_errors))

    _warm_up(cfg)
    todo = points + nt_points
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, todo))
    else:
        results = [_sweep_point(p) for p in todo]
    res_main, res_nt = results[: len(points)], results[len(points):]

    write_csv(out / "sweep.csv", ["beta", "gamma", "n_xi", "iterations", "final_objective", "wall_ms"],
              [[p["beta"] for p in points], [p["gamma"] for p in points], [p["n_xi"] for p in points],
               [r[1] for r in res_main], [r[2] for r in res_main], [r[3] for r in res_main]], int_cols=(2, 3))
    if len(betas) == 1 and len(gammas) == 1 and len(nxis) > 1:
        order = np.argsort(nxis)
        ref = res_main[order[-1]]
        dt = ref[5][1] - ref[5][0]
        rows = [(nxis[i], _l2(res_main[i][4], ref[4], dt)) for i in order[:-1]]
        write_csv(out / "error.csv", ["n_xi", "l2_err_vs_finest"], [[r[0] for r in rows], [r[1] for r in rows]],
                  int_cols=(0,))
    if nt_points:
        write_csv(out / "sweep_nt.csv", ["n_t", "iterations", "final_objective", "wall_ms"],
                  [nts, [r[1] for r in res_nt], [r[2] for r in res_nt], [r[3] for r in res_nt]], int_cols=(0, 1))
        order = np.argsort(nts)
        ref = res_nt[order[-1]]
        rows = []
        for i in order[:-1]:
            times, vals = res_nt[i][5], res_nt[i][4]
            ref_on_grid = np.interp(times, ref[5], ref[4])
            rows.append((nts[i], _l2(vals, ref_on_grid, times[1] - times[0])))
        write_csv(out / "error_nt.csv", ["n_t", "l2_err_vs_finest"], [[r[0] for r in rows], [r[1] for r in rows]],
                  int_cols=(0,))
    worst = max((STATUS_EXIT[r[0]] for r in results), default=EXIT_OK)
    return worst


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfstackelberg",
        description="Mean-field Stackelberg solver: leader control by gradient descent over the adjoint cascade.",
        epilog=SCHEMAS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("solve", "run the leader descent and write control, convergence and field CSVs"),
                        ("particles", "particle oracle: costate consistency and density gap"),
                        ("gradcheck", "compare the descent direction with finite differences"),
                        ("sweep", "parameter / mesh sweeps with timing")]:
        p = sub.add_parser(name, help=help_, epilog=SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", type=Path, help="key = value file (default: paper setup)")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="overrides particles.seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
        if name == "particles":
            p.add_argument("--control", type=Path, help="control.csv to take v_star from instead of optimizing")
        if name == "sweep":
            p.add_argument("--beta", help="comma-separated beta values")
            p.add_argument("--gamma", help="comma-separated gamma values")
            p.add_argument("--n-xi", dest="n_xi", help="comma-separated cell counts")
            p.add_argument("--n-t", dest="n_t", help="comma-separated time-grid sizes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.defaults()
        if args.seed is not None:
            cfg = cfg.with_(particles__seed=args.seed)
        if args.command == "sweep":
            for key in ("beta", "gamma", "n_xi", "n_t"):
                val = getattr(args, key)
                if val is not None:
                    (parse_int_list if key in ("n_xi", "n_t") else parse_float_list)(val)
                    cfg = cfg.with_(**{f"sweep__{key}": val})
        errs = validate(cfg.spec())
        if errs:
            raise ConfigError("; ".join(errs))
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        out = args.out if args.out is not None else Path(cfg.get("output_dir"))
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "solve":
        return cmd_solve(cfg, out)
    if args.command == "particles":
        return cmd_particles(cfg, out, args.control)
    if args.command == "gradcheck":
        return cmd_gradcheck(cfg, out)
    return cmd_sweep(cfg, out, args.jobs)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
