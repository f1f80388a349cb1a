"""Closed-form error radii and failure probabilities.

The accumulated error of a compressed neuron is dominated in convex order
by a centred Gaussian with covariance ``beta_t I``, where

    beta_t = (C pi M^2 / 2) * max_{i <= t} ||X_i||^2.

Everything here is a direct evaluation of that variance proxy, the
covariance recursion it majorises, the Gaussian sup-norm tail, and the
per-layer radii / failure masses for the three stochastic operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import column_norms

SQRT2 = math.sqrt(2.0)
# divisor in the support-failure exponent, per operator kind
_SUPPORT_DIVISOR = {"onebit_quantize": 32.0 * math.pi, "quantize_prune": 8.0 * math.pi}
_M_OVER_K = {"onebit_quantize": 4.0, "prune": 1.0, "quantize_prune": 2.0, "identity": 0.0}


@dataclass(frozen=True)
class BoundInputs:
    C: float
    M: float
    K: float
    p: float
    N0: int
    N1: int
    m: int
    column_norms: np.ndarray

    def __post_init__(self):
        if self.C < 1:
            raise ValueError(f"C must be >= 1, got {self.C}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        norms = np.asarray(self.column_norms, dtype=np.float64)
        if norms.shape != (self.N0,):
            raise ValueError(f"need {self.N0} column norms, got shape {norms.shape}")
        if np.any(norms < 0):
            raise ValueError("column norms must be nonnegative")
        object.__setattr__(self, "column_norms", norms)

    @classmethod
    def from_data(cls, X: np.ndarray, *, C: float, K: float, p: float = 1.0, N1: int = 1,
                  M: float | None = None, kind: str | None = None) -> "BoundInputs":
        """Build inputs from a data matrix; ``M`` defaults to the operator's bound for ``kind``."""
        if M is None:
            if kind is None:
                raise ValueError("give either M or an operator kind")
            M = _M_OVER_K[kind] * K
        m, N0 = X.shape
        return cls(C=C, M=M, K=K, p=p, N0=N0, N1=N1, m=m, column_norms=column_norms(X))

    @property
    def max_norm(self) -> float:
        return float(np.max(self.column_norms))


def beta_sequence(inp: BoundInputs) -> np.ndarray:
    """``[beta_0, beta_1, ..., beta_N0]`` with ``beta_0 = 0``."""
    running = np.maximum.accumulate(inp.column_norms ** 2)
    return np.concatenate([[0.0], inp.C * math.pi * inp.M ** 2 / 2.0 * running])


def sigma_recursion(X: np.ndarray, C: float, M: float, t_max: int | None = None) -> list[np.ndarray]:
    """Covariance majorants ``[Sigma_0, ..., Sigma_tmax]``.

    Sigma_t = (I - P_t / C) Sigma_{t-1} (I - P_t / C) + (pi M^2 / 2) X_t X_t^T,
    P_t the orthogonal projection onto span(X_t).
    """
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    X = np.asarray(X, dtype=np.float64)
    m, N = X.shape
    t_max = N if t_max is None else t_max
    if not 0 <= t_max <= N:
        raise ValueError(f"t_max must lie in [0, {N}]")
    sigma = np.zeros((m, m))
    out = [sigma]
    eye = np.eye(m)
    c2 = math.pi * M ** 2 / 2.0
    for t in range(t_max):
        x = X[:, t]
        nx = float(x @ x)
        if nx == 0.0:
            raise ValueError(f"column t={t + 1} is zero; projection undefined")
        outer = np.outer(x, x)
        A = eye - outer / (C * nx)
        sigma = A @ sigma @ A + c2 * outer
        sigma = 0.5 * (sigma + sigma.T)
        out.append(sigma)
    return out


def gaussian_tail(alpha: float, sigma2: float, n: int) -> float:
    """Upper bound on P(||Z||_inf > alpha) for Z dominated by N(0, sigma2 I_n)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return min(1.0, SQRT2 * n * math.exp(-alpha * alpha / (4.0 * sigma2)))


def tail_radius(gamma: float, sigma2: float, n: int) -> float:
    """The alpha with ``gaussian_tail(alpha, sigma2, n) == gamma`` for gamma in (0, 1]."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    return 2.0 * math.sqrt(sigma2) * math.sqrt(math.log(SQRT2 * n / gamma))


def kappa(inp: BoundInputs, kind: str) -> float:
    """High-probability radius for the max entrywise (post-activation) layer error.

    ``M sqrt(2 pi C p log N0) max_i ||X_i||`` with ``M`` = 4K, K, 2K for
    onebit_quantize, prune, quantize_prune.
    """
    if kind not in _M_OVER_K:
        raise ValueError(f"no error radius for kind {kind!r}")
    if inp.N0 < 2:
        raise ValueError("kappa needs N0 >= 2 so that log N0 > 0")
    M = _M_OVER_K[kind] * inp.K
    return M * math.sqrt(2.0 * math.pi * inp.C * inp.p * math.log(inp.N0)) * inp.max_norm


def error_failure_mass(inp: BoundInputs) -> float:
    """sqrt(2) m N1 N0^-p, the union-bounded chance some output exceeds kappa."""
    return SQRT2 * inp.m * inp.N1 * float(inp.N0) ** (-inp.p)


def support_failure_mass(inp: BoundInputs, kind: str) -> float:
    """N1 sum_{t=2}^{N0} sqrt(2) exp(-C ||X_t||^2 / (D max_{i<t} ||X_i||^2)).

    ``D`` is 32 pi for onebit_quantize and 8 pi for quantize_prune; other
    kinds make no support claim and return 0.  The t = 1 term is omitted
    because u_0 = 0 makes that event impossible.
    """
    if kind not in _SUPPORT_DIVISOR:
        return 0.0
    sq = inp.column_norms ** 2
    prev_max = np.maximum.accumulate(sq)[:-1]  # max_{i <= t-1} for t = 2..N0
    cur = sq[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(prev_max > 0, -inp.C * cur / (_SUPPORT_DIVISOR[kind] * prev_max), -np.inf)
    return inp.N1 * SQRT2 * float(np.sum(np.exp(expo)))


def raw_failure_mass(inp: BoundInputs, kind: str) -> float:
    return support_failure_mass(inp, kind) + error_failure_mass(inp)


def failure_probability(inp: BoundInputs, kind: str) -> float:
    """Theoretical failure mass for a whole layer, clamped to [0, 1]."""
    return min(1.0, max(0.0, raw_failure_mass(inp, kind)))
