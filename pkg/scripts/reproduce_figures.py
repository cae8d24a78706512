"""Run every preset sweep and write per-seed and aggregated CSVs.

    python3 scripts/reproduce_figures.py --out results --workers 4
    python3 scripts/reproduce_figures.py --only dra profiling --seeds 0,1
"""
import argparse
import os
import sys
import time
from pathlib import Path

from hypersched_sim.harness import OUT_ENV, PRESETS, cmd_sweep, preset


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=os.environ.get(OUT_ENV, "results"))
    parser.add_argument("--only", nargs="*", choices=sorted(PRESETS), default=None)
    parser.add_argument("--seeds", default=None, help="comma separated, default 0-4")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args(argv)

    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    out = Path(args.out)
    for name in args.only or list(PRESETS):
        t0 = time.perf_counter()
        cmd_sweep(preset(name, seeds), out, workers=args.workers)
        print(f"  {name} took {time.perf_counter() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
