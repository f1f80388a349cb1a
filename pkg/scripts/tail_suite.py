"""Single-neuron tail check: empirical P(||u_N0||_inf > alpha) against the Gaussian bound."""

import argparse

from spfc.experiments import run_tail_suite
from spfc.operators import OperatorSpec
from spfc.report import emit_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="onebit_quantize", choices=["onebit_quantize", "prune", "quantize_prune", "identity"])
    ap.add_argument("--K", type=float, default=1.0)
    ap.add_argument("--c", type=float, default=0.5)
    ap.add_argument("--N0", type=int, default=128)
    ap.add_argument("--m", type=int, default=16)
    ap.add_argument("--C", type=float, default=4.0)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="tail_suite.json")
    args = ap.parse_args()

    c = args.c if args.kind in ("prune", "quantize_prune") else None
    spec = OperatorSpec(args.kind, args.K, c)
    rep = run_tail_suite(spec, N0=args.N0, m=args.m, C=args.C, trials=args.trials, seed=args.seed)
    for chk in rep.checks:
        print(f"alpha={chk.alpha:10.4f}  empirical={chk.empirical:.4f}  bound={chk.bound:.4g}  "
              f"{'ok' if chk.passed else 'VIOLATED'}")
    print(f"beta={rep.beta:.4g}  worst margin={rep.worst_margin:.4g}  passed={rep.passed}")
    emit_report({"spec": spec.to_dict(), "C": args.C, "N0": args.N0, "seed": args.seed, "tail": rep.to_dict()}, args.out)


if __name__ == "__main__":
    main()
