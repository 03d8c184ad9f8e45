"""Compare the numba and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--sizes 500,1000,4000] [--repeat 200]

Times each kernel on random inputs for both backends, then times a full
cascade sweep under each backend in a fresh interpreter (the backend is
chosen at import time through ``MFSTACK_DISABLE_NUMBA``).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mfstackelberg import _kernels as K

CASCADE_SNIPPET = """
import time, warnings
warnings.simplefilter("ignore")
from mfstackelberg import BACKEND, TimeSeries, paper_spec, run_cascade
spec = paper_spec(n_xi={n})
v = TimeSeries.sample(spec.v0, spec.times)
run_cascade(spec, v)
best = min(
    (lambda s: (run_cascade(spec, v), time.perf_counter() - s)[1])(time.perf_counter())
    for _ in range({repeat})
)
print(BACKEND, best)
"""


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'n':>7}{'numpy us':>12}{'numba us':>12}{'speedup':>9}")
    for n in sizes:
        u, s, c, src = (rng.standard_normal(n) for _ in range(4))
        table = rng.standard_normal((100, n))
        xs = rng.uniform(0.0, 2.0, 1000)
        cases = {
            "lf_update_quadratic": lambda b: b["lf_update_quadratic"](u, 0.5, s, c, src, 1e-3, 2.0 / n, 1.0),
            "max_speed_quadratic": lambda b: b["max_speed_quadratic"](u, 0.5, s),
            "periodic_lookup(1000)": lambda b: b["periodic_lookup"](table, 0.0, 0.01, 0.0, 2.0 / n, 0.505, xs),
        }
        for name, call in cases.items():
            times = {}
            for prefix in ("numpy", "numba"):
                backend = {k: getattr(K, f"{prefix}_{k}") for k in
                           ("lf_update_quadratic", "max_speed_quadratic", "periodic_lookup")}
                call(backend)  # compile
                times[prefix] = min(timeit.repeat(lambda: call(backend), number=repeat, repeat=3)) / repeat * 1e6
            print(f"{name:<24}{n:>7}{times['numpy']:>12.2f}{times['numba']:>12.2f}"
                  f"{times['numpy'] / times['numba']:>9.2f}")


def bench_cascade(sizes, repeat):
    print(f"\n{'cascade':<24}{'n_xi':>7}{'backend':>10}{'best s':>10}")
    for n in sizes:
        for flag in ("1", "0"):
            env = dict(os.environ, MFSTACK_DISABLE_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", CASCADE_SNIPPET.format(n=n, repeat=repeat)],
                                 env=env, capture_output=True, text=True, check=True).stdout.split()
            print(f"{'run_cascade':<24}{n:>7}{out[0]:>10}{float(out[1]):>10.3f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--sizes", default="500,1000,4000")
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--cascade-repeat", type=int, default=3)
    args = parser.parse_args()
    if not K.HAVE_NUMBA:
        sys.exit("numba is not importable; nothing to compare")
    sizes = [int(x) for x in args.sizes.split(",") if x]
    bench_kernels(sizes, args.repeat)
    bench_cascade([n for n in sizes if n <= 1000], args.cascade_repeat)


if __name__ == "__main__":
    main()
