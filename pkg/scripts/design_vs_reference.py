"""Anneal a leaf code for T(.,7), M = 4 and compare it with the reference code [3,8,14,12,9,12,9].

Both matrices are scored by the exact leaf error with PBPO rules refreshed
for each candidate.
"""
import argparse
import sys

import numpy as np

from treecode.codebook import from_integer_columns, to_integer_columns
from treecode.design import AnnealSchedule, leaf_objective, optimise
from treecode.observation import GaussianShiftModel, snr_to_s


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, default=5.0)
    ap.add_argument("--snr-base", type=int, choices=(2, 10), default=2)
    ap.add_argument("--method", choices=("anneal", "ccr", "anneal+ccr"), default="anneal")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--T0", type=float, default=0.05)
    ap.add_argument("--alpha", type=float, default=0.8)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--T-min", type=float, default=1e-3)
    args = ap.parse_args(argv)

    model = GaussianShiftModel.equally_spaced(4, snr_to_s(args.snr, base=args.snr_base))
    f = leaf_objective(model, np.full(4, 0.25))
    reference = from_integer_columns([3, 8, 14, 12, 9, 12, 9], 4)
    ref = f(reference)
    res = optimise(f, 4, 7, args.method, AnnealSchedule(args.T0, args.alpha, args.steps, args.T_min, args.seed))
    print(f"reference  {to_integer_columns(reference)} d_min={reference.d_min} P_e={ref:.6f}")
    print(f"designed   {to_integer_columns(res.matrix)} d_min={res.d_min} P_e={res.objective:.6f}")
    print(f"difference {res.objective - ref:+.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
