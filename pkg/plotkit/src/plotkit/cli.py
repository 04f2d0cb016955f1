"""Command line front end: one verb per plot type."""

from __future__ import annotations

import argparse
import sys

from . import io, plots

EXIT_OK = 0
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="plotkit",
        description="Render static figures from solver run outputs")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plot-xt", help="overlay x-t masks")
    p.add_argument("masks", nargs="+", help="mask files (up to 3)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--labels", help="comma-separated legend labels")
    p.add_argument("--title", default="")

    p = sub.add_parser("plot-gauges", help="overlay gauge time series")
    p.add_argument("gauges", nargs="+", help="gauge CSV files")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--labels", help="comma-separated legend labels")
    p.add_argument("--title", default="")

    p = sub.add_parser("plot-levels", help="draw a patch layout")
    p.add_argument("patches", help="patch layout log file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--time", type=float, default=0.0,
                   help="pick the layout nearest this time [s]")
    p.add_argument("--field", help="optional x-t field file for a heat strip")
    p.add_argument("--title", default="")
    return ap


def _labels(arg, paths):
    if arg is None:
        return list(paths)
    labels = [s.strip() for s in arg.split(",")]
    if len(labels) != len(paths):
        raise io.FormatError(
            f"{len(labels)} labels for {len(paths)} inputs")
    return labels


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plot-xt":
            masks = [io.read_xt(p) for p in args.masks]
            plots.plot_xt(masks, _labels(args.labels, args.masks),
                          args.output, title=args.title)
        elif args.command == "plot-gauges":
            labels = _labels(args.labels, args.gauges)
            series = [io.read_gauge(p, lab)
                      for p, lab in zip(args.gauges, labels)]
            plots.plot_gauges(series, args.output, title=args.title)
        elif args.command == "plot-levels":
            boxes = io.read_patch_log(args.patches)
            field = io.read_xt(args.field) if args.field else None
            plots.plot_levels(boxes, args.time, args.output, field=field,
                              title=args.title)
    except (io.FormatError, plots.PlotError, FileNotFoundError) as e:
        print(f"plotkit: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(args.output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
