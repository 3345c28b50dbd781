"""Command-line front end: simulate, design, eval, trace.

Each command reads declared inputs, writes fixed-name artifacts into the
output directory, and exits 0. Failures print exactly one line to stderr
of the form ``error:<category>: <detail>`` with category one of args,
config, io, format, or schedule, and exit nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import files
from .bayes import confusion, design_regions, generate_dataset, simulate_timeline
from .corrsim import make_tap_grid
from .files import (
    ConfigError,
    FileFormatError,
    RunConfig,
    ScheduleError,
    config_hash,
)
from .svg import svg_region_map, svg_timeline

__all__ = ["main", "RunConfig"]


class _Parser(argparse.ArgumentParser):
    """argparse with errors reshaped into the one-line stderr contract."""

    def error(self, message):
        print(f"error:args: {message}", file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pdml", description="Power-distortion interference classification pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a Monte-Carlo measurement dataset (dataset.csv)")
    sim.add_argument("--config", required=True, help="JSON run configuration")
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--detector", choices=("pdml", "sd"), default=None, help="override the detector")
    sim.add_argument("--taps", type=int, default=None, help="override the tap count")
    sim.add_argument("--workers", type=int, default=None, help="parallel scenario workers (output-identical)")
    sim.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    sim.set_defaults(func=cmd_simulate)

    des = sub.add_parser("design", help="fit decision regions to a dataset (regions.txt + regions.svg)")
    des.add_argument("--config", required=True)
    des.add_argument("--dataset", required=True, help="dataset.csv from `pdml simulate`")
    des.add_argument("--out", default=None)
    des.set_defaults(func=cmd_design)

    ev = sub.add_parser("eval", help="confusion matrix of a dataset against regions (confusion.csv)")
    ev.add_argument("--regions", required=True, help="regions.txt from `pdml design`")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--out", default=".")
    ev.set_defaults(func=cmd_eval)

    tr = sub.add_parser("trace", help="replay a scripted timeline (trace.csv + trace.svg)")
    tr.add_argument("--config", required=True)
    tr.add_argument("--schedule", required=True, help="JSON phase schedule")
    tr.add_argument("--regions", required=True)
    tr.add_argument("--out", default=None)
    tr.set_defaults(func=cmd_trace)
    return parser


def _outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def cmd_simulate(args) -> int:
    cfg = files.load_config(
        args.config, seed=args.seed, detector=args.detector,
        taps=args.taps, workers=args.workers, output_dir=args.out,
    )
    grid = make_tap_grid(cfg.taps)
    ds = generate_dataset(
        cfg.priors, cfg.mc, grid, cfg.detector, cfg.seed,
        power_model=cfg.power, rel_tol=cfg.rel_tol, max_iter=cfg.max_iter,
        sd_offset=cfg.sd_offset, workers=cfg.workers,
    )
    path = os.path.join(_outdir(cfg.output_dir), "dataset.csv")
    files.write_dataset(ds, path, config_hash(cfg), cfg.grid_spec)
    print(f"wrote {path} ({len(ds)} rows, detector={cfg.detector}, seed={cfg.seed})")
    return 0


def cmd_design(args) -> int:
    cfg = files.load_config(args.config, output_dir=args.out)
    ds, meta = files.read_dataset(args.dataset)
    if ds.detector != cfg.detector:
        raise FileFormatError(
            f"dataset was generated with detector {ds.detector!r}, config says {cfg.detector!r}")
    if meta.grid_spec != cfg.grid_spec:
        raise FileFormatError("axis mismatch: dataset grid provenance differs from config grid")
    regions = design_regions(ds, cfg.grid_spec, cfg.cost, config_hash=config_hash(cfg))
    out = _outdir(cfg.output_dir)
    path = os.path.join(out, "regions.txt")
    files.write_regions(regions, path)
    svg_path = os.path.join(out, "regions.svg")
    svg_region_map(regions, svg_path)
    print(f"wrote {path} ({regions.spec.p_bins}x{regions.spec.d_bins} cells, "
          f"{regions.clamped} design samples clamped)")
    print(f"wrote {svg_path}")
    return 0


def cmd_eval(args) -> int:
    regions = files.read_regions(args.regions)
    ds, meta = files.read_dataset(args.dataset)
    if meta.grid_spec != regions.spec:
        raise FileFormatError("axis mismatch: dataset grid provenance differs from regions axes")
    if ds.detector != regions.detector:
        raise FileFormatError(
            f"dataset was generated with detector {ds.detector!r}, regions with {regions.detector!r}")
    conf = confusion(ds, regions)
    out = _outdir(args.out)
    path = os.path.join(out, "confusion.csv")
    files.write_confusion(conf, path, regions.config_hash, regions.detector)
    lines = files.summary_lines(conf)
    summary_path = os.path.join(out, "eval_summary.txt")
    with open(summary_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path}")
    print(f"wrote {summary_path}")
    for line in lines:
        print(line)
    return 0


def cmd_trace(args) -> int:
    cfg = files.load_config(args.config, output_dir=args.out)
    schedule = files.read_schedule(args.schedule)
    regions = files.read_regions(args.regions)
    if regions.detector != cfg.detector:
        raise FileFormatError(
            f"regions were designed for detector {regions.detector!r}, config says {cfg.detector!r}")
    grid = make_tap_grid(cfg.taps)
    result = simulate_timeline(
        schedule, grid, cfg.detector, regions, seed=cfg.seed,
        power_model=cfg.power, rel_tol=cfg.rel_tol, max_iter=cfg.max_iter,
        sd_offset=cfg.sd_offset,
    )
    out = _outdir(cfg.output_dir)
    path = os.path.join(out, "trace.csv")
    files.write_trace(result, path, config_hash(cfg), cfg.seed, cfg.detector)
    svg_path = os.path.join(out, "trace.svg")
    svg_timeline(result, svg_path)
    shares = ", ".join(f"H{i}={result.traces[i, -1]:.3f}" for i in range(4))
    print(f"wrote {path} ({result.epoch.size} epochs)")
    print(f"wrote {svg_path}")
    print(f"final decision shares: {shares}")
    return 0


def _fail(category: str, exc: BaseException) -> int:
    print(f"error:{category}: {exc}", file=sys.stderr)
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse help/usage paths
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", exc)
    except ScheduleError as exc:
        return _fail("schedule", exc)
    except FileFormatError as exc:
        return _fail("format", exc)
    except OSError as exc:
        return _fail("io", exc)
    except ValueError as exc:  # core model invariants (bad parameters)
        return _fail("config", exc)


if __name__ == "__main__":
    sys.exit(main())
