"""``spfc`` command line.

Exit codes: 0 success, 1 a bound was violated beyond statistical slack,
2 bad input or configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds
from .compressor import CompressionConfig, compress_network
from .experiments import (
    LayerSetup,
    random_weights,
    rtn_comparison,
    run_tail_suite,
    svd_equivalence_experiment,
    verify_proposition,
)
from .network import ManifestError, activate, forward, init_random_mlp, load_model, save_model
from .numerics import ConvergenceError, Mat1FormatError, ShapeError, read_mat1
from .operators import OperatorSpec, deviation_bound
from .report import emit_report, support_histogram, write_csv
from .rng import derive_seed, synthetic_data

COMPRESS_KINDS = {"quantize": "onebit_quantize", "prune": "prune", "quantize-prune": "quantize_prune"}
KIND_ALIASES = {
    "onebit": "onebit_quantize", "quantize": "onebit_quantize", "onebit_quantize": "onebit_quantize",
    "prune": "prune", "quantize-prune": "quantize_prune", "quantize_prune": "quantize_prune",
}
# fallback values once flags and --config are merged
DEFAULTS = {
    "seed": 0, "C": None, "c": None, "p": 1.0, "m": None, "distribution": "uniform", "activation": "relu",
    "activation_mode": "paired", "trials": None, "threads": None, "out": "report.json",
}


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spfc", description="Stochastic path following compression")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values for any flag")
    common.add_argument("--seed", type=int, help="master seed (SPFC_SEED overrides)")
    common.add_argument("--out", help="report path (JSON)")
    common.add_argument("--threads", type=int, help="worker threads for column-parallel compression")
    common.add_argument("--K", type=float, help="weight bound")
    common.add_argument("--C", type=float, help="error-correction scaling, >= 1")
    common.add_argument("--p", type=float, help="probability exponent, >= 1")
    common.add_argument("--m", type=int, help="synthetic data points")
    common.add_argument("--distribution", choices=("uniform", "gaussian"))

    for name in COMPRESS_KINDS:
        sp = sub.add_parser(name, parents=[common], help=f"compress a network ({COMPRESS_KINDS[name]})")
        sp.add_argument("--model", help="model manifest JSON")
        sp.add_argument("--dims", type=_int_list, help="synthetic model layer sizes, e.g. 64,16")
        sp.add_argument("--data", help="MAT1 data matrix (rows are data points)")
        sp.add_argument("--activation", choices=("relu", "identity"))
        sp.add_argument("--activation-mode", dest="activation_mode", choices=("paired", "shared"))
        sp.add_argument("--save-model", dest="save_model", help="write the compressed model manifest here")
        if name != "quantize":
            sp.add_argument("--c", type=float, help="pruning threshold fraction in (0, 1]")

    vb = sub.add_parser("verify-bounds", parents=[common], help="Monte Carlo check of the layer error bounds")
    vb.add_argument("--kind", required=True, choices=sorted(KIND_ALIASES))
    vb.add_argument("--c", type=float)
    vb.add_argument("--dims", type=_int_list, help="N0,N1")
    vb.add_argument("--trials", type=int)
    vb.add_argument("--tail-trials", dest="tail_trials", type=int, default=0,
                    help="also run the single-neuron tail suite with this many runs")

    cr = sub.add_parser("compare-rtn", parents=[common], help="round-to-nearest versus SPFC on a coherent instance")
    cr.add_argument("--n0-list", dest="n0_list", type=_int_list, help="input dimensions, e.g. 64,256,1024")
    cr.add_argument("--trials", type=int)
    cr.add_argument("--csv", help="CSV table path (default: report path with .csv)")

    sc = sub.add_parser("svd-check", parents=[common], help="compare runs on X and on diag(s) Vt")
    sc.add_argument("--dims", type=_int_list, help="N0 (neuron length)")
    sc.add_argument("--cases", type=int, default=20)
    return parser


def _merge(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        known = set(vars(args)) | set(DEFAULTS)
        unknown = sorted(set(loaded) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        if "operator" in loaded:
            raise ConfigError("set operator fields as top-level K / c")
        cfg.update(loaded)
    cfg.update({k: v for k, v in vars(args).items() if v is not None})
    if "dims" in cfg and isinstance(cfg["dims"], str):
        cfg["dims"] = _int_list(cfg["dims"])
    if os.environ.get("SPFC_SEED"):
        try:
            cfg["seed"] = int(os.environ["SPFC_SEED"])
        except ValueError as exc:
            raise ConfigError("SPFC_SEED must be an integer") from exc
    if cfg.get("threads") is None:
        cfg["threads"] = os.cpu_count() or 1
    return cfg


def _require(cfg: dict, field: str, flag: str | None = None):
    if cfg.get(field) is None:
        raise ConfigError(f"field '{field}' is required (--{flag or field})")
    return cfg[field]


def _validate_common(cfg: dict) -> None:
    if cfg.get("C") is not None and not cfg["C"] >= 1:
        raise ConfigError(f"field 'C' must be >= 1, got {cfg['C']}")
    if not cfg["p"] >= 1:
        raise ConfigError(f"field 'p' must be >= 1, got {cfg['p']}")
    if cfg.get("K") is not None and not cfg["K"] > 0:
        raise ConfigError(f"field 'K' must be > 0, got {cfg['K']}")
    if cfg.get("c") is not None and not 0 < cfg["c"] <= 1:
        raise ConfigError(f"field 'c' must lie in (0, 1], got {cfg['c']}")
    if cfg["threads"] < 1:
        raise ConfigError("field 'threads' must be >= 1")
    if cfg.get("m") is not None and cfg["m"] < 1:
        raise ConfigError("field 'm' must be >= 1")


def _echo(cfg: dict) -> dict:
    skip = {"config", "threads", "out"}
    return {k: cfg[k] for k in sorted(cfg) if k not in skip and cfg[k] is not None}


def _layer_bounds(x_in: np.ndarray, spec: OperatorSpec, C: float, p: float, N1: int):
    inp = bounds.BoundInputs.from_data(x_in, C=C, K=spec.K, p=p, N1=N1, M=deviation_bound(spec))
    if inp.N0 < 2:
        return None, None
    return bounds.kappa(inp, spec.kind), bounds.failure_probability(inp, spec.kind)


def cmd_compress(cfg: dict) -> tuple[dict, int]:
    kind = COMPRESS_KINDS[cfg["command"]]
    seed = cfg["seed"]
    if cfg.get("model") and cfg.get("dims"):
        raise ConfigError("give exactly one of 'model' and 'dims'")
    if cfg.get("model"):
        net = load_model(cfg["model"])
        K = cfg["K"] if cfg.get("K") is not None else net.K
    elif cfg.get("dims"):
        K = _require(cfg, "K")
        if len(cfg["dims"]) < 2:
            raise ConfigError("field 'dims' needs at least two sizes")
        net = init_random_mlp(cfg["dims"], K=K, seed=derive_seed(seed, 1), activation=cfg["activation"])
    else:
        raise ConfigError("one of 'model' (--model) or 'dims' (--dims) is required")
    C = cfg["C"] if cfg.get("C") is not None else 1.0
    c = _require(cfg, "c") if kind != "onebit_quantize" else None
    spec = OperatorSpec(kind=kind, K=K, c=c)
    if cfg.get("data"):
        X = read_mat1(cfg["data"])
    else:
        X = synthetic_data(derive_seed(seed, 2), cfg["m"] or 32, net.input_dim, cfg["distribution"])
    ccfg = CompressionConfig(operator=spec, C=C, master_seed=seed, activation_mode=cfg["activation_mode"],
                             threads=cfg["threads"])
    res = compress_network(net, X, ccfg)
    per_layer = []
    for i, (lr, x_in, xt_in, W) in enumerate(zip(res.layers, res.inputs, res.compressed_inputs, net.layers), start=1):
        pre_w = x_in @ W
        pre_q = xt_in @ lr.Q
        kap, mass = _layer_bounds(xt_in, spec, C, cfg["p"], W.shape[1])
        per_layer.append({
            "layer": i,
            "shape": list(W.shape),
            "kappa": kap,
            "failure_mass": mass,
            "max_error_pre": float(np.max(np.abs(pre_w - pre_q))),
            "max_error_post": float(np.max(np.abs(activate(pre_w, net.activation) - activate(pre_q, net.activation)))),
            "support_histogram": support_histogram(lr.Q, kind),
            "sparsity_fraction": float(np.mean(lr.Q == 0.0)),
            "saturation_events": lr.saturation_events,
            "weight_bound_exceeded": any(t.weight_bound_exceeded for t in lr.traces),
            "final_u_inf": lr.final_u_inf.tolist(),
        })
    out_orig = forward(net, X)[-1]
    out_comp = forward(res.model, X)[-1]
    if cfg.get("save_model"):
        save_model(res.model, cfg["save_model"])
    payload = {
        "command": cfg["command"],
        "config": _echo(cfg),
        "seed": seed,
        "operator": spec.to_dict(),
        "per_layer": per_layer,
        "network": {"max_output_error": float(np.max(np.abs(out_orig - out_comp)))},
        "timing": {"compress_seconds": res.elapsed},
    }
    return payload, 0


def cmd_verify(cfg: dict) -> tuple[dict, int]:
    kind = KIND_ALIASES[cfg["kind"]]
    dims = cfg.get("dims") or [256, 16]
    if len(dims) != 2:
        raise ConfigError("field 'dims' must be N0,N1 for verify-bounds")
    N0, N1 = dims
    if N0 < 2:
        raise ConfigError("field 'dims' needs N0 >= 2")
    K = cfg["K"] if cfg.get("K") is not None else 1.0
    C = cfg["C"] if cfg.get("C") is not None else float(math.ceil(math.log(N0 * N1)))
    c = _require(cfg, "c") if kind != "onebit_quantize" else None
    trials = cfg["trials"] if cfg.get("trials") is not None else 200
    if trials < 1:
        raise ConfigError("field 'trials' must be >= 1")
    spec = OperatorSpec(kind=kind, K=K, c=c)
    ccfg = CompressionConfig(operator=spec, C=C, master_seed=cfg["seed"], activation_mode="shared", threads=cfg["threads"])
    setup = LayerSetup(N0=N0, N1=N1, m=cfg["m"] or 32, p=cfg["p"], distribution=cfg["distribution"])
    start = time.perf_counter()
    rep = verify_proposition(ccfg, setup, trials)
    payload = {
        "command": "verify-bounds",
        "config": _echo(cfg),
        "seed": cfg["seed"],
        "operator": spec.to_dict(),
        "C": C,
        "bound_report": rep.to_dict(),
    }
    code = 1 if rep.status == "fail" else 0
    if cfg.get("tail_trials"):
        tail = run_tail_suite(spec, N0=N0, m=cfg["m"] or 32, C=C, trials=cfg["tail_trials"], seed=cfg["seed"],
                              distribution=cfg["distribution"], threads=cfg["threads"])
        payload["tail_report"] = tail.to_dict()
        if not tail.passed:
            code = 1
    payload["timing"] = {"seconds": time.perf_counter() - start}
    return payload, code


def cmd_compare_rtn(cfg: dict) -> tuple[dict, int]:
    n0_list = cfg.get("n0_list") or [64, 256, 1024]
    K = cfg["K"] if cfg.get("K") is not None else 1.0
    C = cfg["C"] if cfg.get("C") is not None else 16.0
    trials = cfg["trials"] if cfg.get("trials") is not None else 100
    m = cfg["m"] if cfg.get("m") is not None else 16
    start = time.perf_counter()
    rows = rtn_comparison(n0_list, K=K, C=C, seed=cfg["seed"], trials=trials, m=m, p=cfg["p"])
    csv_path = cfg.get("csv") or str(Path(cfg["out"]).with_suffix(".csv"))
    write_csv(csv_path, ["N0", "rtn_error", "spfc_error", "kappa", "ratio"],
              [[r.N0, r.rtn_error, r.spfc_error, r.kappa, r.ratio] for r in rows])
    ratios = [r.ratio for r in rows]
    ok = all(r.spfc_within_kappa >= 0.95 for r in rows) and all(a < b for a, b in zip(ratios, ratios[1:]))
    ok = ok and all(abs(r.rtn_error - r.rtn_expected) <= 1e-10 * r.rtn_expected for r in rows)
    payload = {
        "command": "compare-rtn",
        "config": _echo(cfg),
        "seed": cfg["seed"],
        "rows": [vars(r) for r in rows],
        "passed": ok,
        "csv": csv_path,
        "timing": {"seconds": time.perf_counter() - start},
    }
    return payload, 0 if ok else 1


def cmd_svd_check(cfg: dict) -> tuple[dict, int]:
    dims = cfg.get("dims") or [8]
    N0 = dims[0]
    m = cfg["m"] if cfg.get("m") is not None else 64
    K = cfg["K"] if cfg.get("K") is not None else 1.0
    C = cfg["C"] if cfg.get("C") is not None else 4.0
    spec = OperatorSpec("onebit_quantize", K)
    start = time.perf_counter()
    cases = []
    for k in range(cfg["cases"]):
        s = derive_seed(cfg["seed"], k)
        X = synthetic_data(derive_seed(s, 1), m, N0, cfg["distribution"])
        w = random_weights(derive_seed(s, 2), N0, 1, K)[:, 0]
        chk = svd_equivalence_experiment(X, w, CompressionConfig(operator=spec, C=C, master_seed=s))
        cases.append({"case": k, "rank": chk.rank, "q_equal": chk.q_equal, "error_full": chk.error_full,
                      "error_reduced": chk.error_reduced, "rel_diff": chk.rel_diff, "passed": chk.passed})
    ok = all(c["passed"] for c in cases)
    payload = {"command": "svd-check", "config": _echo(cfg), "seed": cfg["seed"], "cases": cases, "passed": ok,
               "timing": {"seconds": time.perf_counter() - start}}
    return payload, 0 if ok else 1


HANDLERS = {"verify-bounds": cmd_verify, "compare-rtn": cmd_compare_rtn, "svd-check": cmd_svd_check}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _merge(args)
        _validate_common(cfg)
        handler = HANDLERS.get(cfg["command"], cmd_compress)
        payload, code = handler(cfg)
        path = emit_report(payload, cfg["out"])
    except (ConfigError, ShapeError, Mat1FormatError, ManifestError, ConvergenceError, ValueError, OSError) as exc:
        print(f"spfc: error: {exc}", file=sys.stderr)
        return 2
    status = "ok" if code == 0 else "bound violated"
    print(f"spfc {cfg['command']}: {status}; report written to {path}")
    return code


def main() -> None:
    sys.exit(run())
