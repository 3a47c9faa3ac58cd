"""Command-line entry point: ``baps-sim run`` and ``baps-sim sweep``."""

import argparse
import logging
import sys

import yaml

from .errors import ConfigurationError
from .harness import ExperimentConfig, default_workers, emit, load_config, run_point, sweep, to_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_overrides(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(value)
    return out


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = _parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.with_overrides(overrides) if overrides else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="baps-sim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configuration (all repetitions)")
    run.add_argument("--config", help="YAML key/value config file")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output path (.csv or .jsonl); stdout CSV if omitted")
    run.add_argument("--format", choices=("csv", "jsonl"))
    run.add_argument("--no-timing", action="store_true", help="write wall_s as 0")
    run.add_argument("overrides", nargs="*", metavar="KEY=VALUE")

    sw = sub.add_parser("sweep", help="run the Cartesian product of a parameter grid")
    sw.add_argument("--config", help="YAML key/value config file")
    sw.add_argument("--grid", required=True, help="YAML grid file or inline mapping, e.g. '{lambda: [0, 0.02]}'")
    sw.add_argument("--out", required=True)
    sw.add_argument("--format", choices=("csv", "jsonl"))
    sw.add_argument("--workers", type=int, default=None, help="default: $BAPS_WORKERS or 1")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--best-pilot-window", action="store_true",
                    help="keep only the best-MI pilot_window per point")
    sw.add_argument("--no-timing", action="store_true", help="write wall_s as 0")
    sw.add_argument("overrides", nargs="*", metavar="KEY=VALUE")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        timing = not args.no_timing
        if args.command == "run":
            if len(cfg.pilot_windows) != 1:
                raise ConfigurationError("run needs a scalar pilot_window; use sweep")
            rows = [run_point(cfg, rep, timing) for rep in range(cfg.repetitions)]
            if args.out:
                emit(rows, args.out, args.format)
            else:
                sys.stdout.write(to_csv(rows))
        else:
            workers = args.workers if args.workers is not None else default_workers()
            sweep(cfg, args.grid, args.out, workers, args.format, args.best_pilot_window, timing)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
