#!/usr/bin/env python3
"""EXPLORATORY: how the flow leaves the graph regime for C1-large data.

Fixes a small C0 amplitude and raises the mode number, so |u| stays small
while |du| and |D2u| grow; for high enough modes the Hessian guard trips
immediately.  Whether a blowup exit means a genuine singularity, loss of
graphicality or a CFL failure cannot be decided here: outputs are labeled
exploratory and are excluded from the certified acceptance battery.

Usage: python scripts/explore_large_data.py [results_dir]
"""

import sys
from pathlib import Path

from lmcf.cli import main

BASE_CONFIG = """
dim = 1
sizes = 64
kappa = 0
t_max = 0.5
conv_tol = 1e-8
checkpoint_every = 50
u0_preset = single_mode
u0_amplitude = 0.002
u0_modes = {mode}
"""


def run(results_dir):
    results = Path(results_dir) / "exploratory_c1_growth"
    results.mkdir(parents=True, exist_ok=True)
    print("mode  sup|du0|~2pi*k*A  exit  outcome")
    for mode in (1, 2, 4, 8, 16):
        cfg_path = results / f"mode_{mode}.cfg"
        cfg_path.write_text(BASE_CONFIG.format(mode=mode))
        out = results / f"mode_{mode}"
        code = main(["run", str(cfg_path), "-o", str(out)])
        outcome = next(
            line.split("=")[1].strip()
            for line in (out / "summary.txt").read_text().splitlines()
            if line.startswith("outcome")
        )
        du0 = 2 * 3.14159 * mode * 0.002
        print(f"{mode:4d}  {du0:16.4f}  {code:4d}  {outcome}  [exploratory]")
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "results"))
