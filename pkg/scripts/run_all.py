"""Run every shipped config and print where each experiment's outputs went.

    python scripts/run_all.py [--out out] [--threads N] [--drops N] [--only NAME ...]
"""
import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from papr_green.harness import parse_config, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--drops", type=int, default=None, help="override the drop count of every config")
    ap.add_argument("--only", nargs="*", default=None, help="config stems to run")
    args = ap.parse_args(argv)
    status = 0
    for path in sorted(CONFIGS.glob("*.json")):
        if args.only and path.stem not in args.only:
            continue
        if not args.only and path.stem.endswith("_large"):
            continue  # hours on one core; request it with --only
        cfg = parse_config(path)
        if args.drops:
            cfg = replace(cfg, monte_carlo=replace(cfg.monte_carlo, n_drops=args.drops))
        t0 = time.perf_counter()
        rep = run_experiment(cfg, Path(args.out) / path.stem, args.threads)
        ok = rep.passed and rep.failure_rate < 1.0
        status |= not ok
        print(f"{path.stem:24s} {'ok' if ok else 'FAILED'}  failure rate {rep.failure_rate:.3f}  "
              f"hash {rep.content_hash[:12]}  {time.perf_counter() - t0:.0f} s")
    return status


if __name__ == "__main__":
    sys.exit(main())
