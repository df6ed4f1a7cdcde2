"""Temporal convergence of the Liu-Wu schemes under boundary refinement.

    python scripts/order_study.py --order second --factors 1 2 4 --out results/order
"""

import argparse
from pathlib import Path

from chdbc.experiments import ERROR_NAMES, lw_order_config, run_temporal_order_study, study_table
from chdbc.models import Order, parse_order
from chdbc.output import write_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--order", default="second")
    ap.add_argument("--T", type=float, default=5e-5)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--factors", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--finest", type=int, default=None)
    ap.add_argument("--out", default="results/order")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    order = parse_order(args.order)
    # first order needs a finer reference and starts one halving later
    first_k, ref_div = (2, 1024) if order is Order.SECOND else (3, 2048)
    taus = [args.T / 2**k for k in range(first_k, 8)]
    study = run_temporal_order_study("liu_wu", lw_order_config(order, args.T), taus,
                                     args.factors, n=args.n, ref_tau=args.T / ref_div,
                                     finest_factor=args.finest, workers=args.workers)
    table = study_table(study)
    write_rows(Path(args.out) / f"{order.value}.csv", list(table[0]),
               [list(r.values()) for r in table])
    for f in study.factors:
        print(f"factor {f}: " + ", ".join(f"{k} {study.fitted[f, k]:.3f}" for k in ERROR_NAMES))
        e = study.errors(f, "p_l2_h1", finest=True)
        print("  p_l2_h1 vs finest boundary: " + " ".join(f"{v:.3e}" for v in e))


if __name__ == "__main__":
    main()
