"""``papr-green`` command line: run a config or the built-in oracle checks."""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace

from .errors import ConfigError
from .harness import config_from_dict, parse_config, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2


def _parser():
    ap = argparse.ArgumentParser(prog="papr-green", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (default: out/<experiment>)")
    run.add_argument("--seed", type=int, default=None, help="override monte_carlo.base_seed")
    run.add_argument("--drops", type=int, default=None, help="override monte_carlo.n_drops")
    run.add_argument("--threads", type=int, default=1, help="worker processes for drops")
    val = sub.add_parser("validate", help="run the built-in oracle checks")
    val.add_argument("--out", default=None)
    return ap


def _with_overrides(cfg, seed, drops):
    mc = cfg.monte_carlo
    if seed is not None:
        if seed < 0:
            raise ConfigError("must be non-negative", "--seed")
        mc = replace(mc, base_seed=seed)
    if drops is not None:
        if drops < 1:
            raise ConfigError("must be positive", "--drops")
        mc = replace(mc, n_drops=drops)
    return replace(cfg, monte_carlo=mc)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _with_overrides(parse_config(args.config), args.seed, args.drops)
            threads = args.threads
        else:
            cfg = config_from_dict({"experiment": "validate"})
            threads = 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or f"out/{cfg.experiment}"
    t0 = time.perf_counter()
    try:
        report = run_experiment(cfg, out, threads)
    except Exception as exc:  # noqa: BLE001 - any crash is an experiment failure
        print(f"experiment failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    for p in report.csv_paths + report.svg_paths:
        print(p)
    print(f"content hash {report.content_hash}; failure rate {report.failure_rate:.3f}; "
          f"{time.perf_counter() - t0:.1f} s", file=sys.stderr)
    if not report.passed or report.failure_rate >= 1.0:
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
