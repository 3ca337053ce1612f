"""Reproduce the error-table ladder: squared error of gradient descent for x0 = 1 and x0 = 0.

    python3 scripts/run_error_table.py --deltas 1e-2,1e-4,1e-6
"""

import argparse

from cprates import rates
from cprates.problem import build_depth_profiling_operator, make_grid
from cprates.regularizers import EXACT, Quadratic


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--deltas", default=",".join(repr(d) for d in rates.DEFAULT_DELTAS))
    ap.add_argument("--beta", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--solver", default="gd", choices=rates.SOLVERS)
    args = ap.parse_args()

    deltas = [float(d) for d in args.deltas.split(",")]
    grid = make_grid(args.n)
    op = build_depth_profiling_operator(grid)
    source = rates.make_source_instance(op, rates.default_source_element(grid))
    ladders = {
        x0: rates.run_noise_ladder(
            op, source, Quadratic(), EXACT, deltas, beta=args.beta, x0=grid.constant(x0),
            solver=args.solver, seed=args.seed, max_iter=10**7,
        )  # fmt: skip
        for x0 in (1.0, 0.0)
    }
    print("delta | delta^beta | x_0 = 1 | x_0 = 0 | iterations (x_0 = 1, x_0 = 0)")
    for i, d in enumerate(deltas):
        a, b = ladders[1.0][i], ladders[0.0][i]
        print(f"{d:.0e} | {d**args.beta:.1e} | {a.error_sq:.1e} | {b.error_sq:.1e} | {a.iterations}, {b.iterations}")
    if len(deltas) >= 2:
        for x0, recs in ladders.items():
            fit = rates.fit_rate(recs, "error_sq")
            print(f"x_0 = {x0:g}: estimated rate {fit.slope:.2f} (r^2 {fit.r_squared:.3f})")


if __name__ == "__main__":
    main()
