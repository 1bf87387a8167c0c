#!/usr/bin/env python3
"""Full pipeline run with per-stage timing.

Equivalent to `diracwg all` but reports wall-clock time for each stage;
useful for profiling parameter choices.
"""

import argparse
import sys
import time
from pathlib import Path

from diracwg import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    cfg = cli.parse_config(args.config, args.out, args.jobs)
    stages = [
        ("oracle", cli.cmd_oracle),
        ("bands", cli.cmd_bands),
        ("dirac", cli.cmd_dirac),
        ("gap", cli.cmd_gap),
        ("interface", cli.cmd_interface),
    ]
    for name, fn in stages:
        t0 = time.time()
        code = fn(cfg)
        print(f"[{name}] {time.time() - t0:.1f}s (exit {code})")
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
