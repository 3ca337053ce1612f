"""Rate fits for every metric under a chosen solver and stopping rule.

    python3 scripts/rate_study.py --solver oracle
    python3 scripts/rate_study.py --solver gd-spectral --eta-rule delta --x0 0
    python3 scripts/rate_study.py --target jump --solver oracle
"""

import argparse
import json

from cprates import rates
from cprates.problem import build_depth_profiling_operator, make_grid
from cprates.regularizers import EXACT, Quadratic


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--solver", default="oracle", choices=rates.SOLVERS)
    ap.add_argument("--stopping", default="gradnorm", choices=rates.STOPPINGS)
    ap.add_argument("--eta-rule", default="alpha-power", choices=rates.ETA_RULES)
    ap.add_argument("--beta", type=float, default=0.1)
    ap.add_argument("--x0", type=float, default=0.0)
    ap.add_argument("--target", default="source", choices=("source", "jump"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    grid = make_grid(args.n)
    op = build_depth_profiling_operator(grid)
    if args.target == "source":
        inst = rates.make_source_instance(op, rates.default_source_element(grid))
    else:
        inst = rates.make_target_instance(op, rates.jump_target(grid))
    recs = rates.run_noise_ladder(
        op, inst, Quadratic(), EXACT, rates.DEFAULT_DELTAS, beta=args.beta, x0=grid.constant(args.x0),
        solver=args.solver, eta_rule=args.eta_rule, stopping=args.stopping, max_iter=10**9, workers=args.workers,
    )  # fmt: skip
    for m in rates.METRICS:
        try:
            f = rates.fit_rate(recs, m)
        except rates.RateFitError:
            print(f"{m:16s} no usable points")
            continue
        print(f"{m:16s} slope {f.slope:6.3f}  r^2 {f.r_squared:.4f}  points {f.points_used}")
    conv = rates.converse_check(recs, inst, Quadratic(), EXACT)
    print("converse:", json.dumps(conv.as_dict(), indent=1))
    print("inexact bound:", json.dumps(rates.inexact_bound_check(recs).as_dict()))


if __name__ == "__main__":
    main()
