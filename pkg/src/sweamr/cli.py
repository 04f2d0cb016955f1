"""Command line entry point: run scenarios and post-process their outputs.

Verbs: ``run``, ``adjoint-only``, ``compare-gauges``, ``emit-xt``.  Any extra
``--section.key=value`` flag overrides the matching config field.  Exit codes:
0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .adjoint import AdjointError
from .amr import AmrError
from .bathymetry import BathymetryError
from .scenario import (
    ConfigError,
    ScenarioConfig,
    apply_overrides,
    adjoint_only,
    builtin_scenario,
    compare_gauges,
    emit_xt_aggregate,
    load_config,
    run,
)
from .solver import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sweamr",
        description="Adjoint-guided AMR shallow water scenarios.")
    sub = p.add_subparsers(dest="verb", required=True)

    for verb in ("run", "adjoint-only"):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", help="scenario INI file")
        sp.add_argument("--builtin", help="builtin scenario name "
                                          "(shelf1d, radial2d)")
        sp.add_argument("--serial", action="store_true",
                        help="force deterministic single-threaded execution "
                             "(execution is always serial; accepted for "
                             "compatibility)")

    sp = sub.add_parser("compare-gauges")
    sp.add_argument("gauge_a", help="gauge CSV under test")
    sp.add_argument("gauge_b", help="reference gauge CSV")
    sp.add_argument("--report", help="write the JSON report here")

    sp = sub.add_parser("emit-xt")
    sp.add_argument("field_file", help="x-t field history file")
    sp.add_argument("--threshold", type=float, required=True)
    sp.add_argument("--out", required=True)
    return p


def _split_overrides(argv):
    """Separate --section.key=value overrides from regular arguments."""
    plain, overrides = [], []
    for a in argv:
        if a.startswith("--") and "=" in a and "." in a.split("=", 1)[0]:
            overrides.append(a[2:])
        else:
            plain.append(a)
    return plain, overrides


def _load(args, overrides) -> ScenarioConfig:
    if args.config and args.builtin:
        raise ConfigError("give either --config or --builtin, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.builtin:
        cfg = builtin_scenario(args.builtin)
    else:
        raise ConfigError("one of --config or --builtin is required")
    return apply_overrides(cfg, overrides)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    plain, overrides = _split_overrides(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(plain)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    try:
        if args.verb == "run":
            report = run(_load(args, overrides))
            print(f"run complete: {report.output_dir}")
            print(f"cell steps per level: {report.cell_steps}")
        elif args.verb == "adjoint-only":
            directory = adjoint_only(_load(args, overrides))
            print(f"adjoint snapshots: {directory}")
        elif args.verb == "compare-gauges":
            metrics = compare_gauges(args.gauge_a, args.gauge_b)
            text = json.dumps(metrics, indent=2)
            print(text)
            if args.report:
                with open(args.report, "w") as f:
                    f.write(text + "\n")
        elif args.verb == "emit-xt":
            out = emit_xt_aggregate(args.field_file, args.threshold, args.out)
            print(f"mask written: {out}")
    except (ConfigError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AdjointError, AmrError, BathymetryError,
            ValueError, AssertionError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
