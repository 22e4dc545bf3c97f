"""Command line entry point: ``qds <experiment> --config PATH`` and ``qds validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigError

log = logging.getLogger("qds")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(prog="qds", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="CSV output path (manifest goes alongside)")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            print(f"ok: {cfg.experiment} config is valid")
            return EXIT_OK
        if args.command != cfg.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.command!r}")
        cfg = cfg.with_overrides(seed=args.seed, output=args.out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    # imported here so that `qds validate` stays light
    from .experiments import run_experiment, write_result

    result = run_experiment(cfg)
    path = write_result(result, cfg)
    log.info("wrote %s", path)
    for v in result.violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
