"""Compare the compiled and pure-Python assignment backends.

    python3 benchmarks/bench_kernels.py --sizes 10 50 100 300 --repeats 3
"""

import argparse
import time

import numpy as np

from bridgealign import kernels


def best_time(fn, cost, tol, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(cost, tol)
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 50, 100, 200])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if kernels.compiled is None:
        print("compiled backend not built; timing the pure backend only")
    rng = np.random.default_rng(args.seed)
    print(f"{'N':>6} {'pure [s]':>12} {'compiled [s]':>14} {'speedup':>9} {'agree':>6}")
    for n in args.sizes:
        cost = np.ascontiguousarray(rng.standard_normal((n, n)))
        tol = 1e-9 * max(1.0, float(np.abs(cost).max()))
        t_pure, r_pure = best_time(kernels.pure.lexmin_assignment, cost, tol, args.repeats)
        if kernels.compiled is None:
            print(f"{n:>6} {t_pure:>12.4f} {'-':>14} {'-':>9} {'-':>6}")
            continue
        t_comp, r_comp = best_time(kernels.compiled.lexmin_assignment, cost, tol, args.repeats)
        agree = np.array_equal(np.asarray(r_pure), np.asarray(r_comp))
        print(f"{n:>6} {t_pure:>12.4f} {t_comp:>14.4f} {t_pure / t_comp:>8.1f}x {str(agree):>6}")


if __name__ == "__main__":
    main()
