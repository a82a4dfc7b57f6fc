#!/usr/bin/env python3
"""Overlap sweep on a synthetic image: one CSV per delta plus a fit summary.

    python3 scripts/sweep_delta.py --size 128 --grid 4 --deltas 2,4,8,16 --out runs/delta
"""

import argparse

from dualtv.experiments import ExperimentSweep, RunConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--grid", type=int, default=4, help="subdomains per side")
    ap.add_argument("--deltas", default="2,4,8,16")
    ap.add_argument("--iterations", type=int, default=150)
    ap.add_argument("--reference-iterations", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="runs/delta")
    args = ap.parse_args()

    base = RunConfig(size=args.size, n1=args.grid, n2=args.grid, outer_iterations=args.iterations,
                     reference_iterations=args.reference_iterations, seed=args.seed, output_dir=args.out)
    res = run_sweep(ExperimentSweep("delta", [int(v) for v in args.deltas.split(",")], base))
    print(res.summary(), end="")


if __name__ == "__main__":
    main()
