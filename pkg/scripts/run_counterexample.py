"""Perturbed minimizers on the diagonal operator: R(z_k) stays eps^2/2 above R(x_dag).

    python3 scripts/run_counterexample.py --steps 20 --eps 0.5
"""

import argparse

from cprates.counterexample import counterexample_run, halving_ladder


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--steps", type=int, default=20)
    ap.add_argument("--eps", default="0.5", help="a number or 'delta'")
    ap.add_argument("--support-count", type=int, default=1)
    args = ap.parse_args()

    eps = args.eps if args.eps == "delta" else float(args.eps)
    res = counterexample_run(2 * args.steps + 1, args.support_count, eps, halving_ladder(args.steps))
    print(" k | delta     | H gap     | R gap     | R(z_k) - R(x_dag)")
    for r in res.records:
        print(f"{r.k:2d} | {r.delta:.3e} | {r.h_gap:.3e} | {r.r_gap:.3e} | {r.r_excess:.9f}")
    print("identities hold:", res.identities_hold)


if __name__ == "__main__":
    main()
