"""Compare the compiled and numpy Gibbs kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times one warm-started Newton solve per temperature level (the inner loop
of the encoder solver) and a full ``solve_inner`` call with each backend
swapped in, and checks both backends return the same solution.
"""

import argparse
import timeit

import numpy as np

from mismatched_rd import kernels
from mismatched_rd.inner import solve_inner


def instance(U, W, seed=0):
    rng = np.random.default_rng(seed)
    pu = rng.dirichlet(np.ones(U))
    lam = rng.dirichlet(np.ones(W))
    cost = rng.random((U, W))
    return pu, lam, cost


def gibbs_once(mod, pu, lam, cost, T):
    a = np.log(pu)
    p = np.empty(cost.shape)
    b = np.empty(lam.size)
    mod.gibbs_solve(cost, pu, lam, T, a, p, b, 1e-13, 300)
    return p


def use(mod):
    kernels.gibbs_solve = mod.gibbs_solve
    kernels.info_bits = mod.info_bits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    found = kernels.backends()
    if "cython" not in found:
        print("compiled backend not built; only the numpy kernel is available")
    saved = kernels.gibbs_solve, kernels.info_bits
    print(f"{'case':<28}" + "".join(f"{name:>14}" for name in found) + f"{'speedup':>10}")
    for U, W in [(2, 5), (4, 7), (8, 11), (16, 19)]:
        pu, lam, cost = instance(U, W)
        for label, fn in [
            (f"gibbs T=0.05 {U}x{W}", lambda m: gibbs_once(m, pu, lam, cost, 0.05)),
            (f"solve_inner R=0.3 {U}x{W}", lambda m: (use(m), solve_inner(pu, lam, cost, 0.3))),
        ]:
            times = {}
            for name, mod in found.items():
                n = 20
                t = min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n
                times[name] = t
            row = f"{label:<28}" + "".join(f"{times[k] * 1e6:>11.1f} us" for k in found)
            if len(times) == 2:
                row += f"{times['python'] / times['cython']:>9.1f}x"
            print(row)
        if len(found) == 2:
            use(found["python"])
            ref = solve_inner(pu, lam, cost, 0.3)
            use(found["cython"])
            got = solve_inner(pu, lam, cost, 0.3)
            dev = float(np.max(np.abs(ref.p_star.p - got.p_star.p)))
            print(f"{'':<28}max |p_python - p_cython| = {dev:.2e}")
    kernels.gibbs_solve, kernels.info_bits = saved


if __name__ == "__main__":
    main()
