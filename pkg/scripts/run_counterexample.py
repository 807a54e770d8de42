#!/usr/bin/env python3
"""Rotating-family dichotomy: stationary instantaneous velocity measure
with zero trajectory-level convergence."""

import argparse
import sys

from bohmvel.cli import main as cli_main


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/counterexample")
    ap.add_argument("--omega", type=float, default=1.0)
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--dim", type=int, default=2, choices=(2, 3))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sys.exit(cli_main([
        "counterexample", "--omega", str(args.omega), "--n", str(args.n),
        "--dim", str(args.dim), "--seed", str(args.seed), "--out", args.out,
    ]))
