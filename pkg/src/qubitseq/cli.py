"""Command line entry point: ``qubitseq <experiment> [--config PATH] ...``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime error,
3 run completed but an invariant check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .algebra import DomainError
from .harness import EXPERIMENTS, U64, ConfigError, config_from_dict, load_config, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qubitseq", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", metavar="PATH", help="YAML configuration file")
    ap.add_argument("--seed", type=_u64, help="override the configured seed")
    ap.add_argument("--out", metavar="DIR", help="output directory (default: config out_dir)")
    ap.add_argument("--threads", type=int, help="worker threads for trajectory ensembles")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    log = logging.getLogger("qubitseq")
    try:
        cfg = load_config(args.config) if args.config else config_from_dict({})
        overrides = {"experiment": args.experiment}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.out is not None:
            overrides["out_dir"] = args.out
        doc = cfg.to_dict()
        doc.update(overrides)
        cfg = config_from_dict(doc, environ={})
    except ConfigError as exc:
        for p in exc.problems:
            log.error("config: %s", p)
        return EXIT_CONFIG
    try:
        report = run_experiment(cfg)
    except (DomainError, ArithmeticError, OSError, RuntimeError) as exc:
        log.error("runtime: %s", exc)
        return EXIT_RUNTIME
    failed = report.failed_checks
    if failed:
        for name in failed:
            log.error("invariant check failed: %s", name)
        return EXIT_INVARIANT
    if not args.quiet:
        for k, v in sorted(report.results.items()):
            if not isinstance(v, (dict, list)):
                print(f"{k}: {v}")
        print(f"outputs written to {cfg.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
