"""RTN versus SPFC on the coherent instance, over a range of input dimensions."""

import argparse

from spfc.experiments import rtn_comparison
from spfc.report import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n0-list", dest="n0_list", default="64,256,1024,4096")
    ap.add_argument("--C", type=float, default=16.0)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="rtn_table.csv")
    args = ap.parse_args()

    rows = rtn_comparison([int(v) for v in args.n0_list.split(",")], C=args.C, seed=args.seed, trials=args.trials)
    for r in rows:
        print(f"N0={r.N0:5d} rtn={r.rtn_error:10.3f} spfc(median)={r.spfc_error:7.3f} "
              f"kappa={r.kappa:7.3f} ratio={r.ratio:8.1f} within_kappa={r.spfc_within_kappa:.2f}")
    write_csv(args.out, ["N0", "rtn_error", "spfc_error", "kappa", "ratio"],
              [[r.N0, r.rtn_error, r.spfc_error, r.kappa, r.ratio] for r in rows])


if __name__ == "__main__":
    main()
