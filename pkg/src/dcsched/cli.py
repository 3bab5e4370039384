"""Command-line entry point.

Exit codes: 0 success, 1 golden mismatch, 2 config error, 3 LP size limit,
4 insufficient data.
"""
import argparse
import logging
import sys

from . import goldens
from .config import load_spec, preset_names
from .errors import ConfigError, InsufficientDataError, LPSizeError
from .experiment import OUTPUT_ENV, capacity_report, run_experiment

EXIT_CODES = {ConfigError: 2, LPSizeError: 3, InsufficientDataError: 4}


def cmd_run(args):
    spec = load_spec(args.spec)
    if args.workers:
        spec.workers = args.workers
    out = run_experiment(spec, out=args.output_dir, plots=not args.no_plots)
    print(f"wrote {out / 'results.csv'} and {out / 'summary.csv'}")
    return 0


def cmd_capacity(args):
    spec = load_spec(args.spec)
    print(capacity_report(spec, top=args.top).render())
    return 0


def cmd_plot(args):
    from .plotting import emit_plot_data
    for path in emit_plot_data(args.summary, args.output_dir):
        print(path)
    return 0


def cmd_goldens(args):
    if args.regenerate:
        for path in goldens.regenerate(args.dir):
            print(f"wrote {path}")
        return 0
    bad = goldens.check(args.dir)
    if bad:
        print("golden traces differ: " + ", ".join(bad))
        print("rerun with --regenerate to overwrite them")
        return 1
    print("golden traces match")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="dcsched",
        description="Multi-locality task scheduling simulator for rack-structured clusters.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    spec_help = f"TOML spec file or preset:<name> ({', '.join(preset_names())})"
    r = sub.add_parser("run", help="sweep loads x policies x replications")
    r.add_argument("spec", help=spec_help)
    r.add_argument("-o", "--output-dir", help=f"overrides the spec and ${OUTPUT_ENV}")
    r.add_argument("-j", "--workers", type=int)
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("capacity", help="throughput margin and bottleneck servers")
    c.add_argument("spec", help=spec_help)
    c.add_argument("-k", "--top", type=int, default=5)
    c.set_defaults(func=cmd_capacity)

    pl = sub.add_parser("plot", help="figure data and charts from a summary CSV")
    pl.add_argument("summary")
    pl.add_argument("-o", "--output-dir")
    pl.set_defaults(func=cmd_plot)

    g = sub.add_parser("goldens", help="check (or regenerate) golden event traces")
    g.add_argument("--dir", default="tests/goldens")
    g.add_argument("--regenerate", action="store_true",
                   help="overwrite the stored traces")
    g.set_defaults(func=cmd_goldens)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except tuple(EXIT_CODES) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, LPSizeError):
            print("hint: reduce pool.size or set pool.margin / pool.types explicitly",
                  file=sys.stderr)
        return EXIT_CODES[type(exc)]


if __name__ == "__main__":
    sys.exit(main())
