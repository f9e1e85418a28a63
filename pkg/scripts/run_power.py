#!/usr/bin/env python3
"""Power sweep: delta2 = -1 at n = 200 across three censoring levels.

    python scripts/run_power.py --out power.csv [--threads N] [--seed S]
"""

import argparse
import pathlib
import sys

from pseudoreg.cli import dispatch

CONFIG = pathlib.Path(__file__).parent / "configs" / "table2_power.json"


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="power.csv")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--progress", type=int, default=200)
    args = p.parse_args()
    argv = ["simulate", "--config", str(CONFIG), "--out", args.out,
            "--progress", str(args.progress)]
    if args.threads is not None:
        argv += ["--threads", str(args.threads)]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
