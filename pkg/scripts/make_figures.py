#!/usr/bin/env python3
"""Produce the standard result figures into an output directory.

For each detector this runs a modest design/validate pipeline and renders
the measurement scatter and the fitted decision regions; the two bundled
interference schedules are then replayed against the ML detector's regions
for cumulative-trace plots. Expect roughly half a minute at the defaults.
"""

import argparse
import pathlib
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
    simulate_timeline,
)
from pdml.corrsim import make_tap_grid
from pdml.files import read_schedule, summary_lines
from pdml.svg import svg_region_map, svg_scatter, svg_timeline

SCHEDULES = pathlib.Path(__file__).resolve().parent / "schedules"


def parse_args(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures", help="output directory (default: figures/)")
    ap.add_argument("--n-p", type=int, default=2000, help="scenarios per dataset")
    ap.add_argument("--n-m", type=int, default=20, help="epochs per scenario")
    ap.add_argument("--taps", type=int, default=11)
    ap.add_argument("--seed-design", type=int, default=101)
    ap.add_argument("--seed-valid", type=int, default=202)
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = make_tap_grid(args.taps)
    priors = HypothesisPriors()
    mc = MonteCarloConfig(n_p=args.n_p, n_m=args.n_m)

    ml_regions = None
    for detector in ("pdml", "sd"):
        t0 = time.perf_counter()
        spec = DecisionGridSpec.default_for(detector)
        design_ds = generate_dataset(priors, mc, grid, detector, seed=args.seed_design)
        valid_ds = generate_dataset(priors, mc, grid, detector, seed=args.seed_valid)
        regions = design_regions(design_ds, spec, CostModel())
        if detector == "pdml":
            ml_regions = regions

        svg_scatter(valid_ds.power_db, valid_ds.distortion, valid_ds.truth,
                    spec, str(out / f"{detector}_scatter.svg"))
        svg_region_map(regions, str(out / f"{detector}_regions.svg"))
        print(f"[{detector}] {time.perf_counter() - t0:.1f} s, "
              f"validation on seed {args.seed_valid}:")
        for line in summary_lines(confusion(valid_ds, regions)):
            print(f"  {line}")

    for sched_path in sorted(SCHEDULES.glob("*.json")):
        schedule = read_schedule(str(sched_path))
        result = simulate_timeline(schedule, grid, "pdml", ml_regions, seed=args.seed_valid)
        name = sched_path.stem
        svg_timeline(result, str(out / f"{name}_trace.svg"))
        shares = ", ".join(f"H{i}={result.traces[i, -1]:.3f}" for i in range(4))
        print(f"[{name}] final decision shares: {shares}")

    print(f"figures written to {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
