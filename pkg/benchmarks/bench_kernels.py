"""Numba vs pure-numpy timings for the two hot kernels.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--csv out.csv]

Prints one row per (kernel, size, backend) with the best-of-N wall clock and
the speedup of numba over numpy. Outputs are compared for equality first.
"""

import argparse
import csv
import sys
import timeit

import numpy as np

from difftts import kernels
from difftts._jit import HAVE_NUMBA


def mas_case(n_tok, n_frm, seed=0):
    logp = np.random.default_rng(seed).normal(size=(n_tok, n_frm))
    return lambda fn: fn(logp)


def em_case(n_paths, n_steps, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(n_paths, dim))
    mu = rng.normal(size=(n_paths, dim))
    inv_sigma = np.ones(dim)
    betas = np.linspace(0.05, 20.0, n_steps)
    noise = rng.standard_normal((n_steps, n_paths, dim))
    out = np.empty((n_steps, n_paths, dim))

    def run(fn):
        x = x0.copy()
        fn(x, mu, inv_sigma, betas, 1.0 / n_steps, noise, out, 1)
        return x

    return run


CASES = [
    ("maximum_path", "L=20 F=100", mas_case(20, 100)),
    ("maximum_path", "L=80 F=400", mas_case(80, 400)),
    ("em_forward", "paths=100 steps=200", em_case(100, 200)),
    ("em_forward", "paths=2000 steps=200", em_case(2000, 200)),
]

TWINS = {
    "maximum_path": (kernels._maximum_path_py, kernels._maximum_path_nb),
    "em_forward": (kernels._em_forward_py, kernels._em_forward_nb),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--csv", help="also write the rows to this CSV file")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba unavailable (or DIFFTTS_DISABLE_NUMBA set); nothing to compare", file=sys.stderr)
        return 1

    rows = []
    for kernel, size, case in CASES:
        py, nb = TWINS[kernel]
        np.testing.assert_allclose(case(py), case(nb), rtol=1e-12, atol=1e-12)  # also compiles nb
        t_py = min(timeit.repeat(lambda: case(py), number=1, repeat=args.repeats))
        t_nb = min(timeit.repeat(lambda: case(nb), number=1, repeat=args.repeats))
        rows.append({"kernel": kernel, "size": size, "numpy_ms": 1e3 * t_py, "numba_ms": 1e3 * t_nb,
                     "speedup": t_py / t_nb})

    print(f"{'kernel':<14}{'size':<22}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for r in rows:
        print(f"{r['kernel']:<14}{r['size']:<22}{r['numpy_ms']:>10.2f}{r['numba_ms']:>10.3f}{r['speedup']:>8.1f}x")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
