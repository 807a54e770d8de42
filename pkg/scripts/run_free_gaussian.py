#!/usr/bin/env python3
"""Free Gaussian ensemble: trajectory-side velocity distribution vs the
analytic one (Normal with std 1/(2 m sigma0)), plus equivariance checks."""

import argparse
import sys

from bohmvel.cli import main as cli_main


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/free_gaussian")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    argv = ["run", "--config", "configs/free_gaussian.json", "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    sys.exit(cli_main(argv))
