"""Median max post-activation error versus N0 at fixed C, next to the sqrt(log N0) reference."""

import argparse
import math

from spfc.experiments import error_scaling
from spfc.operators import OperatorSpec
from spfc.report import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="onebit_quantize", choices=["onebit_quantize", "prune", "quantize_prune"])
    ap.add_argument("--n0-list", dest="n0_list", default="64,256,1024")
    ap.add_argument("--C", type=float, default=4.0)
    ap.add_argument("--trials", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--distribution", default="uniform", choices=["uniform", "gaussian"])
    ap.add_argument("--out", default="scaling.csv")
    args = ap.parse_args()

    spec = OperatorSpec(args.kind, 1.0, None if args.kind == "onebit_quantize" else 0.5)
    n0s = [int(v) for v in args.n0_list.split(",")]
    med = error_scaling(n0s, spec, C=args.C, trials=args.trials, seed=args.seed, distribution=args.distribution)
    base = n0s[0]
    rows = []
    for n in n0s:
        ref = math.sqrt(math.log(n) / math.log(base))
        rows.append([n, med[n], med[n] / med[base], ref])
        print(f"N0={n:5d} median_error={med[n]:8.4f} ratio={med[n] / med[base]:.3f} sqrt_log_ratio={ref:.3f}")
    write_csv(args.out, ["N0", "median_error", "ratio", "sqrt_log_ratio"], rows)


if __name__ == "__main__":
    main()
