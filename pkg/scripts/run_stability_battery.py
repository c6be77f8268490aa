#!/usr/bin/env python3
"""Run the certified experiment battery into results/.

Executes every certified preset, then the full verification suite, and
prints one summary line per run.  Exit code is the worst code seen, so the
script doubles as a CI gate.

Usage: python scripts/run_stability_battery.py [results_dir]
"""

import sys
from pathlib import Path

from lmcf.cli import main

CERTIFIED_PRESETS = (
    "stability_kappa0",
    "constant_decay",
    "psi_random",
    "psi_random_2d",
)


def run(results_dir):
    results = Path(results_dir)
    worst = 0
    for preset in CERTIFIED_PRESETS:
        out = results / preset
        code = main(["run", preset, "-o", str(out)])
        summary = (out / "summary.txt").read_text().splitlines()[0]
        print(f"{preset:20s} exit={code}  {summary}")
        worst = max(worst, code)
    code = main(["verify", "all", "-o", str(results / "verify_all")])
    print(f"{'verify all':20s} exit={code}")
    return max(worst, code)


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "results"))
