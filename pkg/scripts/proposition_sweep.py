"""Sweep C for the layer-level validators and tabulate failures against the theoretical mass."""

import argparse

from spfc.compressor import CompressionConfig
from spfc.experiments import LayerSetup, verify_proposition
from spfc.operators import OperatorSpec
from spfc.report import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="onebit_quantize", choices=["onebit_quantize", "prune", "quantize_prune"])
    ap.add_argument("--c", type=float, default=0.5)
    ap.add_argument("--C-list", dest="C_list", default="9,10,11,12,14,16")
    ap.add_argument("--N0", type=int, default=256)
    ap.add_argument("--N1", type=int, default=16)
    ap.add_argument("--m", type=int, default=32)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="proposition_sweep.csv")
    args = ap.parse_args()

    spec = OperatorSpec(args.kind, 1.0, None if args.kind == "onebit_quantize" else args.c)
    setup = LayerSetup(N0=args.N0, N1=args.N1, m=args.m, p=args.p)
    rows = []
    for C in (float(v) for v in args.C_list.split(",")):
        rep = verify_proposition(CompressionConfig(spec, C=C, master_seed=args.seed), setup, args.trials)
        emp = rep.empirical
        rows.append([C, rep.kappa, emp.max_observed_error, emp.error_exceed_count, emp.support_violation_count,
                     rep.raw_failure_mass, rep.status])
        print(f"C={C:5.1f} kappa={rep.kappa:8.3f} max_err={emp.max_observed_error:7.3f} "
              f"exceed={emp.error_exceed_count:3d} support_viol={emp.support_violation_count:3d} "
              f"mass={rep.raw_failure_mass:.4g} [{rep.status}]")
    write_csv(args.out, ["C", "kappa", "max_error", "exceed_count", "support_violations", "raw_failure_mass", "status"], rows)


if __name__ == "__main__":
    main()
