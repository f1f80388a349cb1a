"""Scalar stochastic operators applied to each pre-operator argument ``v_t``.

Each operator is a pure function of its argument and a fixed number of
uniform draws (``OperatorSpec.draws``), vectorised over numpy arrays.  A
fixed draw count per call is what lets a whole layer be compressed in one
batched sweep while staying bitwise identical to a column-by-column run.

Kinds:

``onebit_quantize``
    Unbiased rounding to the adjacent points of ``{(4k + 2) K}``; deviation
    at most ``4K``.
``prune``
    Keeps ``|z| > cK``; otherwise zero, or a same-signed draw from
    ``U[cK, K)`` with probability ``2|z| / ((c + 1) K)``; deviation at most ``K``.
``quantize_prune``
    The pruner followed by unbiased rounding on ``2K * Z``; deviation at most ``2K``.
``rtn_onebit``
    Deterministic nearest point of ``{(4k + 2) K}``, ties toward +inf.  A
    baseline only: it is biased and carries no deviation bound.
``identity``
    Returns its argument; deviation 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStream

KINDS = ("onebit_quantize", "prune", "quantize_prune", "rtn_onebit", "identity")
PRUNING_KINDS = ("prune", "quantize_prune")
_DRAWS = {"onebit_quantize": 1, "prune": 2, "quantize_prune": 3, "rtn_onebit": 0, "identity": 0}


class UnboundedContract(ValueError):
    """The operator makes no unbiasedness / bounded-deviation claim."""


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    K: float = 1.0
    c: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.K) and self.K > 0):
            raise ValueError(f"K must be a positive finite number, got {self.K}")
        if self.kind in PRUNING_KINDS:
            if self.c is None or not 0 < self.c <= 1:
                raise ValueError(f"c must lie in (0, 1] for kind {self.kind!r}, got {self.c}")

    @property
    def draws(self) -> int:
        """Uniform variates consumed per scalar application."""
        return _DRAWS[self.kind]

    @property
    def stochastic(self) -> bool:
        return self.draws > 0

    def apply(self, z, r=None):
        """Apply the operator elementwise; ``r`` has shape ``z.shape + (draws,)``."""
        z = np.asarray(z, dtype=np.float64)
        if not np.all(np.isfinite(z)):
            raise ValueError("operator argument is not finite")
        if self.draws:
            r = np.asarray(r, dtype=np.float64)
            if r.shape != z.shape + (self.draws,):
                raise ValueError(f"expected draws of shape {z.shape + (self.draws,)}, got {r.shape}")
        if self.kind == "onebit_quantize":
            return onebit_round(z, self.K, r[..., 0])
        if self.kind == "prune":
            return prune_sample(z, self.K, self.c, r[..., 0], r[..., 1])
        if self.kind == "quantize_prune":
            y = prune_sample(z, self.K, self.c, r[..., 0], r[..., 1])
            return grid_round(y, 2.0 * self.K, r[..., 2])
        if self.kind == "rtn_onebit":
            return rtn_round(z, self.K)
        return z.copy()

    def sample(self, z, rng: RngStream):
        """Draw the uniforms for ``z`` from ``rng`` and apply."""
        z = np.asarray(z, dtype=np.float64)
        r = rng.uniform(z.shape + (self.draws,)) if self.draws else None
        out = self.apply(z, r)
        return float(out) if out.ndim == 0 else out

    def in_support(self, q) -> np.ndarray:
        """Elementwise membership of ``q`` in the operator's output set.

        Prune outputs that pass through unchanged (``|q| > cK``) are in
        support by definition, so for ``prune`` this only rejects values in
        ``(0, cK)`` in magnitude.
        """
        q = np.asarray(q, dtype=np.float64)
        K = self.K
        if self.kind in ("onebit_quantize", "rtn_onebit"):
            k = (q - 2.0 * K) / (4.0 * K)
            return np.isclose(k, np.round(k), rtol=0, atol=1e-9)
        if self.kind == "quantize_prune":
            k = q / (2.0 * K)
            return np.isclose(k, np.round(k), rtol=0, atol=1e-9)
        if self.kind == "prune":
            a = np.abs(q)
            return (a == 0) | (a >= self.c * K)
        return np.ones(q.shape, dtype=bool)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "K": float(self.K)}
        if self.c is not None:
            d["c"] = float(self.c)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        unknown = set(d) - {"kind", "K", "c"}
        if unknown:
            raise ValueError(f"unknown operator fields: {sorted(unknown)}")
        if "kind" not in d:
            raise ValueError("operator field 'kind' is required")
        if "K" not in d:
            raise ValueError("operator field 'K' is required")
        c = d.get("c")
        return cls(kind=d["kind"], K=float(d["K"]), c=None if c is None else float(c))


def onebit_round(z, K: float, r):
    """Unbiased two-point rounding onto ``{(4k + 2) K}``."""
    z = np.asarray(z, dtype=np.float64)
    step = 4.0 * K
    lo = step * np.floor((z - 2.0 * K) / step) + 2.0 * K
    # guard against the floor landing one cell off after rounding
    lo = np.where(lo > z, lo - step, lo)
    lo = np.where(lo + step <= z, lo + step, lo)
    hi = lo + step
    p_lo = (hi - z) / step
    out = np.where(r < p_lo, lo, hi)
    return np.where(z == lo, z, out)


def grid_round(y, step: float, r):
    """Unbiased two-point rounding onto ``step * Z``.

    Rounds down with probability ``ceil(y/step) - y/step``.
    """
    y = np.asarray(y, dtype=np.float64)
    lo = np.floor(y / step) * step
    lo = np.where(lo > y, lo - step, lo)
    lo = np.where(lo + step <= y, lo + step, lo)
    hi = lo + step
    p_lo = (hi - y) / step
    out = np.where(r < p_lo, lo, hi)
    return np.where(y == lo, y, out)


def prune_sample(z, K: float, c: float, r_keep, r_mag):
    """Stochastic pruning: small entries become 0 or move to ``[cK, K)``."""
    z = np.asarray(z, dtype=np.float64)
    a = np.abs(z)
    p_nonzero = 2.0 * a / ((c + 1.0) * K)
    resampled = np.sign(z) * (c * K + np.asarray(r_mag) * (1.0 - c) * K)
    small = np.where(r_keep < p_nonzero, resampled, 0.0)
    return np.where(a > c * K, z, small)


def rtn_round(z, K: float):
    """Nearest point of ``{(4k + 2) K}``; midpoints go up."""
    z = np.asarray(z, dtype=np.float64)
    step = 4.0 * K
    k = np.floor((z - 2.0 * K) / step + 0.5)
    return step * k + 2.0 * K


def quantize_onebit(z, spec: OperatorSpec, rng: RngStream):
    _require(spec, "onebit_quantize")
    return spec.sample(z, rng)


def prune(z, spec: OperatorSpec, rng: RngStream):
    _require(spec, "prune")
    return spec.sample(z, rng)


def quantize_prune(z, spec: OperatorSpec, rng: RngStream):
    _require(spec, "quantize_prune")
    return spec.sample(z, rng)


def rtn(z, spec: OperatorSpec):
    _require(spec, "rtn_onebit")
    out = spec.apply(z)
    return float(out) if out.ndim == 0 else out


def deviation_bound(spec: OperatorSpec) -> float:
    """The ``M`` with ``|T(v) - v| <= M`` almost surely."""
    if spec.kind == "rtn_onebit":
        raise UnboundedContract("rtn_onebit is deterministic and biased; no deviation bound is claimed")
    return {"onebit_quantize": 4.0, "prune": 1.0, "quantize_prune": 2.0, "identity": 0.0}[spec.kind] * spec.K


def _require(spec: OperatorSpec, kind: str) -> None:
    if spec.kind != kind:
        raise ValueError(f"expected an operator of kind {kind!r}, got {spec.kind!r}")
