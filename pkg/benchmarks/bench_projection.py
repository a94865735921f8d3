"""Compare the numba and pure-numpy projection kernels.

    python benchmarks/bench_projection.py [--fields 5000] [--n 8 16 32 64]

Both paths are run in-process on the same batches; the script also checks
that they agree bit for bit.
"""
import argparse
import time

import numpy as np

from fnosmt import _kernels
from fnosmt.pde import ConstraintSet


def _time(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        res = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fields", type=int, default=5000)
    ap.add_argument("--n", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba unavailable (or disabled): only the numpy path can run")
    rng = np.random.default_rng(args.seed)
    print(f"{'N':>4} {'fields':>7} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}  identical")
    for n in args.n:
        c = ConstraintSet.for_positivity(n)
        # random walks with too-large steps: most rows need several passes
        U = np.cumsum(rng.normal(0, 3.0 / n, size=(args.fields, n)), axis=1) + rng.uniform(-1, 6, (args.fields, 1))
        lo, hi, s = c.lower, c.upper, c.slope_bound
        t_np, r_np = _time(_kernels._project_numpy, U, lo, hi, s, 50)
        if _kernels.HAVE_NUMBA:
            _kernels._project_numba(U[:2].copy(), lo, hi, s, 50)  # compile outside the timing
            t_nb, r_nb = _time(_kernels._project_numba, np.ascontiguousarray(U), lo, hi, s, 50)
            same = np.array_equal(r_np, r_nb)
            print(f"{n:>4} {args.fields:>7} {t_np * 1e3:>11.2f} {t_nb * 1e3:>11.2f} {t_np / t_nb:>8.1f}  {same}")
        else:
            print(f"{n:>4} {args.fields:>7} {t_np * 1e3:>11.2f} {'-':>11} {'-':>8}  -")


if __name__ == "__main__":
    main()
