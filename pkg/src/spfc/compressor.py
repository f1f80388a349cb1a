"""Stochastic path following compression of neurons, layers and networks.

For a neuron ``w`` with input activations ``X`` (original network) and
``Xt`` (compressed network), step ``t`` computes

    h_t = C w_t X_t + u_{t-1}
    v_t = <h_t, Xt_t> / (C ||Xt_t||^2)
    q_t = T(v_t)
    u_t = u_{t-1} + w_t X_t - q_t Xt_t

with ``u_0 = 0``.  The kernel below runs this recursion for a block of
neurons at once: all arithmetic is elementwise or a reduction along the
contiguous last axis, so each neuron's floating point path is the same
whether it is processed alone or in a block of any size.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .network import MlpModel, activate, forward
from .numerics import ShapeError, as_matrix
from .operators import OperatorSpec
from .rng import RngStream, derive_stream

ACTIVATION_MODES = ("paired", "shared")


class NonFiniteError(FloatingPointError):
    def __init__(self, step: int, column: int | None = None):
        where = f"step t={step}" + ("" if column is None else f", column {column}")
        super().__init__(f"non-finite intermediate value at {where}")
        self.step = step
        self.column = column


class WeightBoundWarning(UserWarning):
    """A weight reaches the operator bound K; the error guarantees assume |w| < K."""


@dataclass(frozen=True)
class CompressionConfig:
    operator: OperatorSpec
    C: float = 1.0
    master_seed: int = 0
    activation_mode: str = "shared"
    zero_column_tol: float = 1e-24
    retain_traces: bool = False
    threads: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.C) and self.C >= 1):
            raise ValueError(f"C must be >= 1, got {self.C}")
        if self.activation_mode not in ACTIVATION_MODES:
            raise ValueError(f"activation_mode must be one of {ACTIVATION_MODES}, got {self.activation_mode!r}")
        if self.zero_column_tol < 0:
            raise ValueError("zero_column_tol must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def with_seed(self, seed: int) -> "CompressionConfig":
        return replace(self, master_seed=seed)


@dataclass
class NeuronTrace:
    """Per-step record of one neuron's compression (0-based step index)."""

    q: np.ndarray
    v: np.ndarray
    u_norm_inf: np.ndarray
    u_final: np.ndarray
    saturation_events: int
    weight_bound_exceeded: bool
    u: np.ndarray | None = None  # N x m, only when traces are retained


@dataclass
class CompressionResult:
    Q: np.ndarray
    traces: list[NeuronTrace]
    layer: int = 0
    elapsed: float = 0.0

    @property
    def final_u_inf(self) -> np.ndarray:
        return np.array([tr.u_norm_inf[-1] for tr in self.traces])

    @property
    def saturation_events(self) -> int:
        return int(sum(tr.saturation_events for tr in self.traces))


@dataclass
class NetworkCompressionResult:
    model: MlpModel
    layers: list[CompressionResult]
    inputs: list[np.ndarray] = field(default_factory=list)  # X^(i-1) used per layer
    compressed_inputs: list[np.ndarray] = field(default_factory=list)  # Xt^(i-1) used per layer
    elapsed: float = 0.0


def _update_error(u, w, x, q, xt):
    """u_t = u_{t-1} + w_t X_t - q_t Xt_t for a block of neurons (rows of u)."""
    return u + w[:, None] * x - q[:, None] * xt


def _compress_block(W, X, Xt, cfg: CompressionConfig, draws, columns=None):
    """Run the recursion for the neurons in the columns of ``W`` (N x n).

    ``draws`` has shape ``(n, N, operator.draws)``.  Returns arrays
    ``q, v, uinf`` of shape (N, n), the final errors (n, m), the saturation
    counts and, when requested, the full error history (n, N, m).
    """
    N, n = W.shape
    m = X.shape[0]
    op = cfg.operator
    C = cfg.C
    K = op.K
    XT = np.ascontiguousarray(X.T)
    XtT = np.ascontiguousarray(Xt.T)

    U = np.zeros((n, m))
    q_all = np.empty((N, n))
    v_all = np.empty((N, n))
    uinf = np.empty((N, n))
    sat = np.zeros(n, dtype=np.int64)
    history = np.empty((n, N, m)) if cfg.retain_traces else None

    # overflow is reported as NonFiniteError below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        sq = np.sum(XtT * XtT, axis=1)
        # <h_t, Xt_t> / (C ||Xt_t||^2) = w_t align_t + <u_{t-1}, Xt_t> / (C ||Xt_t||^2);
        # align_t is exactly 1.0 when X is Xt, so the identity operator stays exact
        align = np.sum(XT * XtT, axis=1) / np.where(sq > 0, sq, 1.0)
        for t in range(N):
            w = W[t]
            x = XT[t]
            xt = XtT[t]
            if sq[t] > cfg.zero_column_tol:
                v = w * align[t] + np.sum(U * xt, axis=1) / (C * sq[t])
            else:
                v = w.copy()
            bad = ~np.isfinite(v)
            if bad.any():
                j = int(np.argmax(bad))
                raise NonFiniteError(t + 1, None if columns is None else columns[j])
            q = op.apply(v, draws[:, t, :] if op.draws else None)
            U = _update_error(U, w, x, q, xt)
            if not np.all(np.isfinite(U)):
                raise NonFiniteError(t + 1)
            q_all[t] = q
            v_all[t] = v
            uinf[t] = np.max(np.abs(U), axis=1)
            sat += np.abs(v - w) > K
            if history is not None:
                history[:, t, :] = U
    return q_all, v_all, uinf, U, sat, history


def _check_operands(W, X, Xt):
    if X.shape[1] != W.shape[0]:
        raise ShapeError(f"data {X.shape} does not match weights {W.shape}: need X.cols == W.rows")
    if Xt.shape != X.shape:
        raise ShapeError(f"compressed activations {Xt.shape} differ from activations {X.shape}")


def _traces(W, q, v, uinf, U, sat, history, K) -> list[NeuronTrace]:
    out = []
    for j in range(W.shape[1]):
        out.append(NeuronTrace(
            q=q[:, j].copy(),
            v=v[:, j].copy(),
            u_norm_inf=uinf[:, j].copy(),
            u_final=U[j].copy(),
            saturation_events=int(sat[j]),
            weight_bound_exceeded=bool(np.max(np.abs(W[:, j])) >= K),
            u=None if history is None else history[j],
        ))
    return out


def compress_neuron(w, X, Xt, cfg: CompressionConfig, rng: RngStream) -> NeuronTrace:
    """Compress one neuron, drawing ``operator.draws`` uniforms per step from ``rng``."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    X = as_matrix(X, name="X")
    Xt = as_matrix(Xt, name="Xt")
    W = w[:, None]
    _check_operands(W, X, Xt)
    op = cfg.operator
    if np.max(np.abs(w)) >= op.K:
        warnings.warn(f"max |w| = {np.max(np.abs(w)):.6g} >= K = {op.K}", WeightBoundWarning, stacklevel=2)
    draws = rng.uniform((1, w.size, op.draws)) if op.draws else None
    out = _compress_block(W, X, Xt, cfg, draws)
    return _traces(W, *out, op.K)[0]


def _column_draws(cfg: CompressionConfig, layer: int, columns, N: int):
    k = cfg.operator.draws
    if not k:
        return None
    return np.stack([derive_stream(cfg.master_seed, layer, j).uniform((N, k)) for j in columns])


def compress_layer(W, X, Xt, cfg: CompressionConfig, layer: int = 1) -> CompressionResult:
    """Compress every column of ``W`` with its own stream ``(seed, layer, column)``.

    With ``cfg.threads > 1`` contiguous column blocks run on a thread pool;
    the output is bitwise identical to the serial run.
    """
    start = time.perf_counter()
    W = as_matrix(W, name="W")
    X = as_matrix(X, name="X")
    Xt = as_matrix(Xt, name="Xt")
    _check_operands(W, X, Xt)
    N, n = W.shape
    op = cfg.operator
    if np.max(np.abs(W)) >= op.K:
        warnings.warn(f"layer {layer}: max |W| = {np.max(np.abs(W)):.6g} >= K = {op.K}", WeightBoundWarning, stacklevel=2)

    def run(cols):
        cols = list(cols)
        Wb = np.ascontiguousarray(W[:, cols])
        out = _compress_block(Wb, X, Xt, cfg, _column_draws(cfg, layer, cols, N), columns=cols)
        return _traces(Wb, *out, op.K)

    blocks = [range(lo, min(n, lo + math.ceil(n / cfg.threads))) for lo in range(0, n, math.ceil(n / cfg.threads))]
    if len(blocks) == 1:
        traces = run(blocks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            traces = [tr for part in pool.map(run, blocks) for tr in part]
    Q = np.stack([tr.q for tr in traces], axis=1)
    return CompressionResult(Q=Q, traces=traces, layer=layer, elapsed=time.perf_counter() - start)


def compress_network(net: MlpModel, X, cfg: CompressionConfig) -> NetworkCompressionResult:
    """Compress an MLP layer by layer.

    Layer ``i`` sees ``X^(i-1)`` from the original network and, in paired
    mode, ``Xt^(i-1)`` from the network with layers ``1..i-1`` already
    compressed; in shared mode ``Xt^(i-1) = X^(i-1)``.  Original activations
    are computed once and cached.
    """
    start = time.perf_counter()
    X = as_matrix(X, name="X")
    acts = forward(net, X)
    xt = acts[0]
    layers, ins, tins = [], [], []
    for i, W in enumerate(net.layers, start=1):
        x_in = acts[i - 1]
        xt_in = x_in if cfg.activation_mode == "shared" else xt
        res = compress_layer(W, x_in, xt_in, cfg, layer=i)
        layers.append(res)
        ins.append(x_in)
        tins.append(xt_in)
        xt = activate(xt @ res.Q, net.activation)
    model = replace(net, layers=[r.Q for r in layers], strict_bound=False)
    return NetworkCompressionResult(model=model, layers=layers, inputs=ins, compressed_inputs=tins,
                                    elapsed=time.perf_counter() - start)
