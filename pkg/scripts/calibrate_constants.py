"""Calibrate the universal constant c of the closed-form noise constants.

For each problem family and each reference instance, empirical B1 and B2 are
estimated over several independent sets of points in the gamma-ball, half of
them on its boundary where the noise is largest.  The
calibrated c is the smallest power of two that makes the closed forms
dominate every estimate found.  Paste the printed mapping into
``langevin_lab.constants.CALIBRATED_C``.

    python3 scripts/calibrate_constants.py --seeds 5 --points 200
"""

import argparse
import json

import numpy as np

from langevin_lab.constants import REFERENCE_SIZES, calibrate_c, empirical_constants
from langevin_lab.problems import problem_from_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--samples", type=int, default=10_000)
    args = ap.parse_args()

    result, detail = {}, {}
    for family, instances in REFERENCE_SIZES.items():
        need = 0.0
        for cfg, gamma in instances:
            p = problem_from_config(cfg)
            for seed in range(args.seeds):
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cfg["seed"],)))
                emp = empirical_constants(p, args.samples, args.points, gamma, rng, pairs=10, boundary=0.5)
                c = calibrate_c(p, gamma, emp)
                need = max(need, c)
                detail.setdefault(family, []).append(
                    {"size": cfg.get("m", cfg.get("dim")), "seed": seed, "B1": emp.B1, "B2": emp.B2, "c": c})
                print(f"{family:22s} size={cfg.get('m', cfg.get('dim'))} seed={seed} "
                      f"B1={emp.B1:.4g} B2={emp.B2:.4g} c={c:g}", flush=True)
        result[family] = need
    print(json.dumps({"CALIBRATED_C": result}, indent=2))


if __name__ == "__main__":
    main()
