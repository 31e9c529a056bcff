"""Command line entry point.

    adaptive-teki run --config FILE [--seed S] [--workers W] [--out DIR]
    adaptive-teki rates --config FILE [--workers W] [--out DIR]
    adaptive-teki plot --bundle DIR

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load
from .teki import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("adaptive_teki")


def _parser():
    p = argparse.ArgumentParser(prog="adaptive-teki",
                                description="Ensemble Kalman inversion with adaptive Tikhonov regularization")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a Monte Carlo experiment and write a CSV/SVG bundle")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, help="override experiment.seed")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--out", help="output directory (overrides config and environment)")
    run.add_argument("--no-plots", action="store_true")
    rates = sub.add_parser("rates", help="continuous-time rate suite with log-log slope fits")
    rates.add_argument("--config", required=True)
    rates.add_argument("--workers", type=int, default=1)
    rates.add_argument("--out")
    plot = sub.add_parser("plot", help="(re)draw the SVG figures of a bundle")
    plot.add_argument("--bundle", required=True)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from . import experiment, plots

    try:
        if args.command == "plot":
            for path in plots.emit_plots(args.bundle):
                print(path)
            return EXIT_OK
        cfg = load(args.config)
        if getattr(args, "workers", 1) < 1:
            raise ConfigError("--workers must be at least 1")
        if args.command == "run":
            if args.seed is not None:
                cfg = cfg.replace(experiment={"seed": args.seed})
            out = experiment.run_experiment(cfg, workers=args.workers, out=args.out)
            if not args.no_plots:
                plots.emit_plots(out)
            print(out)
        else:
            report = experiment.run_rate_suite(cfg, workers=args.workers, out=args.out)
            summary = {"spread_slope": report["collapse"]["spread"]["slope"],
                       "max_bound_ratio": report["collapse"]["max_bound_ratio"],
                       "residual_slope": report["inflated"]["running_min_residual"]["slope"]}
            print(json.dumps(summary, indent=2))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
