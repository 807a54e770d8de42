#!/usr/bin/env python3
"""Boost covariance of the asymptotic velocity distribution for a
positive-energy Dirac packet, plus the flat-foliation sweep."""

import argparse
import sys

from bohmvel.cli import main as cli_main


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/dirac_covariance")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    argv = [
        "covariance", "--config", "configs/dirac_covariance.json",
        "--out", args.out, "--workers", str(args.workers),
    ]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    sys.exit(cli_main(argv))
