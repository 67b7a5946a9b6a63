"""Classification error against SNR in T(3,7) with the reference code matrices.

Runs configs/classify_snr.ini through the CLI and prints one row per SNR point.
"""
import argparse
import csv
import sys
from pathlib import Path

from treecode import cli

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "classify_snr.ini"))
    ap.add_argument("--out", default="results/classify_snr.csv")
    ap.add_argument("--snr-base", type=int, choices=(2, 10))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    cmd = ["classify-sim", "--config", args.config, "--out", args.out, "--threads", str(args.threads)]
    if args.snr_base:
        cmd += ["--snr-base", str(args.snr_base)]
    code = cli.main(cmd)
    if code:
        return code
    rows = list(csv.DictReader(open(args.out)))
    print(f"{'snr':>6} {'beta':>5} {'P_e (MC)':>10} {'95% CI':>22} {'P_e (exact)':>12}")
    for r in rows:
        ci = f"[{float(r['ci_low']):.5f}, {float(r['ci_high']):.5f}]"
        print(f"{float(r['axis']):6g} {float(r['beta']):5g} {float(r['metric']):10.5f} {ci:>22} {float(r['exact']):12.5f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
