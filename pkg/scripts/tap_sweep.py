#!/usr/bin/env python3
"""Sweep the correlator tap count and tabulate classification rates.

Runs the full design/validate pipeline once per tap count with shared
seeds, so rows differ only in lag resolution. The headline column is the
spoofing detection rate, which needs enough taps to see the distortion
a second correlation peak leaves between the sampled lags.
"""

import argparse
import csv
import sys
import time

from pdml.bayes import (
    CostModel,
    DecisionGridSpec,
    HypothesisPriors,
    MonteCarloConfig,
    confusion,
    design_regions,
    generate_dataset,
)
from pdml.corrsim import make_tap_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--taps", type=int, nargs="+", default=[5, 7, 11, 15, 21])
    ap.add_argument("--detector", choices=("pdml", "sd"), default="pdml")
    ap.add_argument("--n-p", type=int, default=2000, help="scenarios per dataset")
    ap.add_argument("--n-m", type=int, default=20, help="epochs per scenario")
    ap.add_argument("--seed-design", type=int, default=101)
    ap.add_argument("--seed-valid", type=int, default=202)
    ap.add_argument("--csv", default=None, help="also write the table to this CSV file")
    args = ap.parse_args(argv)

    priors = HypothesisPriors()
    mc = MonteCarloConfig(n_p=args.n_p, n_m=args.n_m)
    spec = DecisionGridSpec.default_for(args.detector)

    header = ("taps", "h0_h0", "h1_h0", "h2_h2", "h3_h3", "seconds")
    print(" ".join(f"{h:>8}" for h in header))
    rows = []
    for taps in args.taps:
        t0 = time.perf_counter()
        grid = make_tap_grid(taps)
        design_ds = generate_dataset(priors, mc, grid, args.detector, seed=args.seed_design)
        valid_ds = generate_dataset(priors, mc, grid, args.detector, seed=args.seed_valid)
        regions = design_regions(design_ds, spec, CostModel())
        freq = confusion(valid_ds, regions).freq
        row = (taps, freq[0, 0], freq[0, 1], freq[2, 2], freq[3, 3],
               time.perf_counter() - t0)
        rows.append(row)
        print(f"{row[0]:>8d} " + " ".join(f"{v:>8.4f}" for v in row[1:5])
              + f" {row[5]:>8.1f}")

    if args.csv:
        with open(args.csv, "w", encoding="ascii", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows([f"{v:.6f}" if isinstance(v, float) else v for v in r]
                             for r in rows)
        print(f"table written to {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
