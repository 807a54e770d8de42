#!/usr/bin/env python3
"""Gaussian-barrier scattering: guided ensemble through the barrier vs the
outgoing-asymptote momentum density (transmitted/reflected bimodal)."""

import argparse
import sys

from bohmvel.cli import main as cli_main


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/barrier")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    argv = ["run", "--config", "configs/barrier_scattering.json", "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    sys.exit(cli_main(argv))
