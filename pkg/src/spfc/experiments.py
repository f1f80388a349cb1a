"""Monte Carlo checks of the error bounds.

All validators are one-sided: an observed exceedance frequency passes when
it is at most the theoretical probability plus three binomial standard
errors (computed at the theoretical probability, i.e. under the null).
Trial ``k`` of a run with master seed ``s`` compresses with seed
``derive_seed(s, k)``, so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds
from .compressor import CompressionConfig, compress_layer, compress_neuron
from .network import activate
from .numerics import svd
from .operators import OperatorSpec, deviation_bound, rtn_round
from .rng import derive_seed, derive_stream, synthetic_data

SLACK_SE = 3.0
MIN_TRIALS = 50


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def random_weights(seed: int, N0: int, N1: int, K: float) -> np.ndarray:
    """Uniform on (-K, K); stream ``(seed, 0, 0)``."""
    return K * (2.0 * derive_stream(seed, 0, 0).uniform((N0, N1)) - 1.0)


# ---------------------------------------------------------------- theorem tail


@dataclass
class TailCheck:
    alpha: float
    bound: float
    empirical: float
    threshold: float

    @property
    def margin(self) -> float:
        return self.threshold - self.empirical

    @property
    def passed(self) -> bool:
        return self.empirical <= self.threshold


@dataclass
class TheoremReport:
    trials: int
    beta: float
    m: int
    checks: list[TailCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst_margin(self) -> float:
        return min(c.margin for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "beta": self.beta,
            "m": self.m,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "checks": [asdict(c) for c in self.checks],
        }


def default_alpha_grid(beta: float, m: int, points: int = 10) -> np.ndarray:
    """Radii at which the Gaussian tail bound equals 1, 10^-0.5, ..., i.e. the non-trivial range."""
    if beta <= 0:
        return np.linspace(0.1, 1.0, points)
    gammas = np.logspace(0.0, -4.5, points)
    return np.array([bounds.tail_radius(g, beta, m) for g in gammas])


def verify_theorem(u_inf_samples, inp: bounds.BoundInputs, alphas=None, t: int | None = None) -> TheoremReport:
    """Compare the empirical law of ``||u_t||_inf`` with the Gaussian tail bound at ``beta_t``.

    ``u_inf_samples`` holds one ``||u_t||_inf`` per independent run;
    ``t`` defaults to ``N0``.
    """
    samples = np.asarray(u_inf_samples, dtype=np.float64).reshape(-1)
    n = samples.size
    if n < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {n}")
    t = inp.N0 if t is None else t
    beta = float(bounds.beta_sequence(inp)[t])
    if alphas is None:
        alphas = default_alpha_grid(beta, inp.m)
    checks = []
    for a in np.asarray(alphas, dtype=np.float64):
        if beta > 0:
            bound = bounds.gaussian_tail(float(a), beta, inp.m)
        else:
            bound = 0.0  # degenerate Gaussian: u_t == 0 almost surely
        emp = float(np.mean(samples > a))
        checks.append(TailCheck(alpha=float(a), bound=bound, empirical=emp,
                                threshold=bound + SLACK_SE * binomial_se(bound, n)))
    return TheoremReport(trials=n, beta=beta, m=inp.m, checks=checks)


def run_tail_suite(spec: OperatorSpec, *, N0: int = 128, m: int = 16, C: float = 4.0, trials: int = 500,
                   seed: int = 0, distribution: str = "uniform", alphas=None, threads: int = 1) -> TheoremReport:
    """Compress one fixed neuron ``trials`` times with independent streams and check the tail.

    The runs are laid out as identical columns of one layer, so column
    ``k`` is trial ``k`` with its own stream.
    """
    X = synthetic_data(derive_seed(seed, 1), m, N0, distribution)
    w = random_weights(derive_seed(seed, 2), N0, 1, spec.K)[:, 0]
    W = np.repeat(w[:, None], trials, axis=1)
    cfg = CompressionConfig(operator=spec, C=C, master_seed=derive_seed(seed, 3), threads=threads)
    res = compress_layer(W, X, X, cfg)
    inp = bounds.BoundInputs.from_data(X, C=C, K=spec.K, M=deviation_bound(spec))
    return verify_theorem(res.final_u_inf, inp, alphas)


# ---------------------------------------------------------------- propositions


@dataclass(frozen=True)
class LayerSetup:
    N0: int = 256
    N1: int = 16
    m: int = 32
    p: float = 2.0
    distribution: str = "uniform"
    activation: str = "relu"


@dataclass
class Empirical:
    trials: int = 0
    error_exceed_count: int = 0
    support_violation_count: int = 0
    failure_count: int = 0
    max_observed_error: float = 0.0
    median_observed_error: float = 0.0
    sparsity_fraction: float | None = None


@dataclass
class BoundReport:
    kind: str
    kappa: float
    failure_probability: float
    raw_failure_mass: float
    beta: list[float]
    empirical: Empirical = field(default_factory=Empirical)
    threshold: float = 0.0
    status: str = "pass"  # pass | fail | vacuous

    @property
    def vacuous(self) -> bool:
        return self.raw_failure_mass >= 1.0

    @property
    def failure_frequency(self) -> float:
        return self.empirical.failure_count / self.empirical.trials if self.empirical.trials else 0.0

    @property
    def exceed_frequency(self) -> float:
        return self.empirical.error_exceed_count / self.empirical.trials if self.empirical.trials else 0.0

    def to_dict(self, include_beta: bool = False) -> dict:
        d = {
            "kind": self.kind,
            "status": self.status,
            "kappa": self.kappa,
            "failure_probability": self.failure_probability,
            "raw_failure_mass": self.raw_failure_mass,
            "vacuous": self.vacuous,
            "threshold": self.threshold,
            "failure_frequency": self.failure_frequency,
            "exceed_frequency": self.exceed_frequency,
            "empirical": asdict(self.empirical),
        }
        if include_beta:
            d["beta"] = list(self.beta)
        return d


def support_violations(Q: np.ndarray, spec: OperatorSpec) -> bool:
    """Whether a quantizing operator left the two-level range ``|Q| <= 2K``."""
    if spec.kind in ("onebit_quantize", "quantize_prune"):
        tol = 1e-12 * spec.K
        return bool(np.any(np.abs(Q) > 2.0 * spec.K + tol) or not np.all(spec.in_support(Q)))
    return False


def verify_proposition(cfg: CompressionConfig, setup: LayerSetup, trials: int = 200,
                       data_seed: int | None = None, p: float | None = None) -> BoundReport:
    """Compress ``trials`` fresh random layers on one fixed data matrix.

    A trial fails when the max post-activation error exceeds kappa or, for
    the quantizing kinds, some ``|Q_ij| > 2K``.  The failure frequency is
    compared with the clamped theoretical failure mass; when the raw mass is
    at least one the bound says nothing and the status is ``vacuous``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    spec = cfg.operator
    kind = spec.kind
    p = setup.p if p is None else p
    seed = cfg.master_seed
    X = synthetic_data(derive_seed(seed if data_seed is None else data_seed, 1), setup.m, setup.N0, setup.distribution)
    inp = bounds.BoundInputs.from_data(X, C=cfg.C, K=spec.K, p=p, N1=setup.N1, M=deviation_bound(spec))
    kap = bounds.kappa(inp, kind)
    raw = bounds.raw_failure_mass(inp, kind)
    mass = bounds.failure_probability(inp, kind)

    emp = Empirical(trials=trials)
    errors = []
    zeros = 0
    for k in range(trials):
        tseed = derive_seed(seed, 1000 + k)
        W = random_weights(derive_seed(tseed, 0), setup.N0, setup.N1, spec.K)
        res = compress_layer(W, X, X, cfg.with_seed(tseed))
        err = float(np.max(np.abs(activate(X @ W, setup.activation) - activate(X @ res.Q, setup.activation))))
        errors.append(err)
        exceed = err > kap
        viol = support_violations(res.Q, spec)
        emp.error_exceed_count += exceed
        emp.support_violation_count += viol
        emp.failure_count += exceed or viol
        zeros += int(np.sum(res.Q == 0.0))
    emp.max_observed_error = max(errors)
    emp.median_observed_error = float(np.median(errors))
    if kind in ("prune", "quantize_prune"):
        emp.sparsity_fraction = zeros / (trials * setup.N0 * setup.N1)

    report = BoundReport(kind=kind, kappa=kap, failure_probability=mass, raw_failure_mass=raw,
                         beta=bounds.beta_sequence(inp).tolist(), empirical=emp)
    report.threshold = mass + SLACK_SE * binomial_se(mass, trials)
    if report.vacuous:
        report.status = "vacuous"
    else:
        report.status = "pass" if report.failure_frequency <= report.threshold else "fail"
    return report


# ---------------------------------------------------------------- RTN baseline


@dataclass
class RtnRow:
    N0: int
    rtn_error: float
    spfc_error: float  # median over trials
    kappa: float
    ratio: float
    spfc_within_kappa: float  # fraction of trials with error <= kappa
    rtn_expected: float


def rtn_comparison(N0_list, K: float = 1.0, C: float = 16.0, seed: int = 0, *, trials: int = 100,
                   m: int = 16, p: float = 1.0) -> list[RtnRow]:
    """RTN versus stochastic path following on a coherent worst case.

    Every column of X is the same unit vector and every weight is 0.999K, so
    RTN rounds each weight to 2K and the per-weight errors add up in phase.

    On this instance the SPFC error is ``|0.999 K N0 - sum(q)|``, a point of a
    lattice with spacing 4K, reached by a leaky walk with stationary variance
    about ``3 C K^2 / 2``.  For small C the walk sits on the lattice point
    nearest zero, whose distance ``0.001 K N0`` grows linearly too and pins
    the ratio at 1001; the default C = 16 spreads the walk over several
    lattice points so the median reflects the walk, not the lattice offset.
    """
    x = np.ones(m) / math.sqrt(m)
    spec = OperatorSpec("onebit_quantize", K)
    rows = []
    for N0 in N0_list:
        X = np.repeat(x[:, None], N0, axis=1)
        w = np.full(N0, 0.999 * K)
        q_rtn = rtn_round(w, K)
        rtn_err = float(np.linalg.norm(X @ (w - q_rtn)))
        W = np.repeat(w[:, None], trials, axis=1)
        cfg = CompressionConfig(operator=spec, C=C, master_seed=derive_seed(seed, N0))
        res = compress_layer(W, X, X, cfg)
        spfc_errs = np.linalg.norm(X @ (W - res.Q), axis=0)
        inp = bounds.BoundInputs.from_data(X, C=C, K=K, p=p, kind="onebit_quantize")
        kap = bounds.kappa(inp, "onebit_quantize")
        med = float(np.median(spfc_errs))
        rows.append(RtnRow(N0=N0, rtn_error=rtn_err, spfc_error=med, kappa=kap,
                           ratio=rtn_err / med if med > 0 else math.inf,
                           spfc_within_kappa=float(np.mean(spfc_errs <= kap)),
                           rtn_expected=abs(0.999 * K - 2.0 * K) * N0 * float(np.linalg.norm(x))))
    return rows


# ---------------------------------------------------------------- SVD remark


@dataclass
class SvdCheck:
    rank: int
    q_equal: bool
    error_full: float
    error_reduced: float

    @property
    def rel_diff(self) -> float:
        denom = max(abs(self.error_full), np.finfo(float).tiny)
        return abs(self.error_full - self.error_reduced) / denom

    @property
    def passed(self) -> bool:
        return self.q_equal and self.rel_diff <= 1e-8


def svd_equivalence_experiment(X, w, cfg: CompressionConfig, seeds: tuple[int, int] | None = None) -> SvdCheck:
    """Run the compressor on ``X`` and on ``diag(s) Vt`` with the same stream.

    Both runs see the same inner products, so the compressed weights agree
    and ``||X (w - q)|| == ||diag(s) Vt (w - q)||``.  ``seeds`` lets a caller
    decouple the two streams (the check should then fail).
    """
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    f = svd(X)
    S = f.sigma_vt()
    sa, sb = seeds if seeds is not None else (cfg.master_seed, cfg.master_seed)
    ta = compress_neuron(w, X, X, cfg, derive_stream(sa, 0, 0))
    tb = compress_neuron(w, S, S, cfg, derive_stream(sb, 0, 0))
    return SvdCheck(rank=f.rank, q_equal=bool(np.array_equal(ta.q, tb.q)),
                    error_full=float(np.linalg.norm(X @ (w - ta.q))),
                    error_reduced=float(np.linalg.norm(S @ (w - tb.q))))


# ---------------------------------------------------------------- scaling


def error_scaling(N0_list, spec: OperatorSpec, *, C: float = 4.0, m: int = 16, N1: int = 4, trials: int = 40,
                  seed: int = 0, distribution: str = "uniform") -> dict[int, float]:
    """Median (over trials) of the max post-activation error, per input dimension."""
    out = {}
    for N0 in N0_list:
        X = synthetic_data(derive_seed(seed, N0), m, N0, distribution)
        errs = []
        for k in range(trials):
            tseed = derive_seed(seed, N0, k)
            W = random_weights(tseed, N0, N1, spec.K)
            Q = compress_layer(W, X, X, CompressionConfig(operator=spec, C=C, master_seed=tseed)).Q
            errs.append(float(np.max(np.abs(activate(X @ W, "relu") - activate(X @ Q, "relu")))))
        out[N0] = float(np.median(errs))
    return out
