"""Boundary substepping sweeps for the Allen-Cahn and Liu-Wu models.

    python scripts/ell_sweeps.py --out results/ell
"""

import argparse
from pathlib import Path

from chdbc.experiments import ERROR_NAMES, ac_ell_config, lw_ell_config, run_ell_sweep
from chdbc.output import write_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--ac-T", type=float, default=0.025)
    ap.add_argument("--lw-T", type=float, default=0.1)
    ap.add_argument("--ref-divisor", type=int, default=16)
    ap.add_argument("--out", default="results/ell")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    sweeps = {
        "allen_cahn": (ac_ell_config(args.ac_T), [1, 2, 4, 8]),
        "liu_wu": (lw_ell_config(args.lw_T), [1, 2, 4, 8, 16]),
    }
    for model, (cfg, ells) in sweeps.items():
        rows = run_ell_sweep(model, cfg, ells, n=args.n, ref_divisor=args.ref_divisor,
                             workers=args.workers)
        write_rows(Path(args.out) / f"{model}.csv", ["ell", *ERROR_NAMES],
                   [[r.ell, *r.errors] for r in rows])
        print(model)
        print("  ell " + " ".join(f"{k:>11s}" for k in ERROR_NAMES))
        for r in rows:
            print(f"  {r.ell:3d} " + " ".join(f"{v:11.4e}" for v in r.errors))


if __name__ == "__main__":
    main()
