"""Zoom-in estimation MSE against the prior width theta_max in T(3,7), M = 4.

Uses the base block [3,8,14,12,9,12,9] at every level, PBPO sensing rules,
and a Lloyd-Max region tree for theta uniform on (0, theta_max).
"""
import argparse
import csv
import sys
from pathlib import Path

from treecode.codebook import from_integer_columns
from treecode.observation import UniformPrior
from treecode.quantizer import quantize_region_tree
from treecode.treesim import TreeConfig, derive_seed, design_estimation_rules, estimation_matrices, run_estimation


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta-max", type=float, nargs="+",
                    default=[0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4, 5, 6, 8, 12, 16, 24, 32])
    ap.add_argument("--beta", type=float, nargs="+", default=[0.0, 0.1])
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--trials", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--rules", choices=("pbpo", "map"), default="pbpo")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--out", default="results/estimate_width_fine.csv")
    args = ap.parse_args(argv)

    base = from_integer_columns([3, 8, 14, 12, 9, 12, 9], 4)
    mats = estimation_matrices(base, 7, 3)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, tm in enumerate(args.theta_max):
        tree = quantize_region_tree(UniformPrior(0.0, tm), 0.0, tm, 4, 3)
        rules = design_estimation_rules(tree, base, args.sigma, args.rules)
        seed = derive_seed(args.seed, i)
        for b in args.beta:
            r = run_estimation(TreeConfig(3, 7, 4, mats, b, args.trials, seed), tree, args.sigma, rules,
                               threads=args.threads)
            rows.append((tm, b, r.mse, *r.mse_ci, r.p_detect, tm**2 / (12 * 64**2)))
            print(f"theta_max={tm:<5g} beta={b:<4g} mse={r.mse:.5f} [{r.mse_ci[0]:.5f}, {r.mse_ci[1]:.5f}] "
                  f"p_detect={r.p_detect:.4f}", flush=True)
    with out.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["theta_max", "beta", "mse", "ci_low", "ci_high", "p_detect", "floor"])
        w.writerows([[repr(float(v)) for v in row] for row in rows])
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
