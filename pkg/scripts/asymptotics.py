"""Classification and estimation bounds as d_min and the tree height grow.

Prints, for a fixed per-level bit error q, the effective classification
bound and the estimation bound against d_min for K = 2, then the
estimation bound against K for fixed per-level factors.
"""
import argparse
import sys

from treecode.error_analysis import a_window, classification_bound, estimation_bound


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=float, default=0.1)
    ap.add_argument("--M", type=int, default=4)
    ap.add_argument("--K", type=int, default=2)
    ap.add_argument("--d", type=int, nargs="+", default=[3, 7, 15, 31, 63, 127])
    ap.add_argument("--strategy", choices=("tightest", "midpoint"), default="tightest")
    args = ap.parse_args(argv)

    lo, hi = a_window(args.q, args.M)
    print(f"q={args.q} M={args.M} K={args.K}; admissible a_k window ({lo:.4g}, {hi:.4g})")
    print(f"{'d_min':>6} {'a_k':>10} {'classification':>15} {'estimation':>12}")
    for d in args.d:
        rep = classification_bound([(d, args.q)] * args.K, args.M, strategy=args.strategy)
        a = rep.levels[0].a
        est = estimation_bound([(d, args.q)] * args.K, args.M).bound
        a_txt = "infeasible" if a is None or not rep.feasible else f"{a:.4g}"
        print(f"{d:6d} {a_txt:>10} {rep.effective_bound:15.6g} {est:12.6g}")
    print()
    print(f"estimation bound against K at d_min = {args.d[1]}")
    for K in range(1, 11):
        print(f"{K:3d} {estimation_bound([(args.d[1], args.q)] * K, args.M).bound:.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
