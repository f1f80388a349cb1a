import warnings

import numpy as np
import pytest

from spfc import compressor
from spfc.compressor import (
    CompressionConfig,
    NonFiniteError,
    WeightBoundWarning,
    compress_layer,
    compress_network,
    compress_neuron,
)
from spfc.network import forward, init_random_mlp
from spfc.numerics import ShapeError, svd
from spfc.operators import OperatorSpec
from spfc.rng import derive_stream

ONEBIT = OperatorSpec("onebit_quantize", 1.0)
QPRUNE = OperatorSpec("quantize_prune", 1.0, 0.5)
IDENT = OperatorSpec("identity", 1.0)


def rand(seed, *shape, low=-1.0, high=1.0):
    return np.random.default_rng(seed).uniform(low, high, shape)


def replay(w, X, Xt, q):
    """Accumulated-error norms rebuilt from the recorded q (independent of the kernel)."""
    u = np.zeros(X.shape[0])
    out = []
    for t in range(len(w)):
        u = u + w[t] * X[:, t] - q[t] * Xt[:, t]
        out.append(np.max(np.abs(u)))
    return np.array(out), u


def test_identity_operator_is_exact():
    X = rand(0, 16, 32)
    w = rand(1, 32, low=-0.9, high=0.9)
    for C in (1.0, 4.0, 100.0):
        tr = compress_neuron(w, X, X, CompressionConfig(IDENT, C=C), derive_stream(0, 0, 0))
        assert np.array_equal(tr.q, w)
        assert np.all(tr.u_norm_inf == 0.0)


def test_single_step_algebra():
    for w1 in (-0.7, 0.2, 0.95):
        for C in (1.0, 3.0):
            tr = compress_neuron([w1], [[1.0]], [[1.0]], CompressionConfig(ONEBIT, C=C), derive_stream(1, 0, 0))
            assert tr.v[0] == pytest.approx(w1, abs=1e-15)
            assert tr.u_final[0] == pytest.approx(w1 - tr.q[0], abs=1e-15)
            assert tr.q[0] in (-2.0, 2.0)


def test_recurrence_replay():
    X = rand(2, 4, 8)
    w = rand(3, 8)
    tr = compress_neuron(w, X, X, CompressionConfig(ONEBIT, C=2.0, retain_traces=True), derive_stream(7, 0, 0))
    norms, u = replay(w, X, X, tr.q)
    np.testing.assert_allclose(tr.u_norm_inf, norms, rtol=0, atol=1e-12)
    np.testing.assert_allclose(tr.u_final, u, atol=1e-12)


def test_matches_naive_algorithm():
    X = rand(4, 6, 20)
    Xt = X + 0.05 * rand(5, 6, 20)
    w = rand(6, 20, low=-0.95, high=0.95)
    C = 3.0
    cfg = CompressionConfig(QPRUNE, C=C)
    tr = compress_neuron(w, X, Xt, cfg, derive_stream(8, 0, 0))
    r = derive_stream(8, 0, 0).uniform((20, 3))
    u = np.zeros(6)
    for t in range(20):
        h = C * w[t] * X[:, t] + u
        v = h @ Xt[:, t] / (C * Xt[:, t] @ Xt[:, t])
        q = float(QPRUNE.apply(np.array(v), r[t]))
        assert q == tr.q[t]
        u = u + w[t] * X[:, t] - q * Xt[:, t]
    np.testing.assert_allclose(tr.u_final, u, atol=1e-12)


def test_recurrence_identity_and_final_error():
    X = rand(9, 5, 40)
    Xt = X + 0.1 * rand(10, 5, 40)
    w = rand(11, 40, low=-0.9, high=0.9)
    C = 2.5
    tr = compress_neuron(w, X, Xt, CompressionConfig(ONEBIT, C=C, retain_traces=True), derive_stream(2, 0, 0))
    u_prev = np.zeros(5)
    for t in range(40):
        x = Xt[:, t]
        # u_t = u_{t-1} + w X_t - v Xt_t + (v - q) Xt_t
        direct = u_prev + w[t] * X[:, t] - tr.v[t] * x + (tr.v[t] - tr.q[t]) * x
        assert np.linalg.norm(tr.u[t] - direct) <= 1e-10 * max(1.0, np.linalg.norm(tr.u[t]))
        u_prev = tr.u[t]
    final = X @ w - Xt @ tr.q
    assert np.linalg.norm(tr.u_final - final) <= 1e-10 * np.linalg.norm(final)


def test_projection_form_shared_mode():
    X = rand(12, 6, 50)
    w = rand(13, 50, low=-0.9, high=0.9)
    C = 4.0
    tr = compress_neuron(w, X, X, CompressionConfig(ONEBIT, C=C, retain_traces=True), derive_stream(3, 0, 0))
    u_prev = np.zeros(6)
    for t in range(50):
        x = X[:, t]
        P = np.outer(x, x) / (x @ x)
        expected = (np.eye(6) - P / C) @ u_prev + (tr.v[t] - tr.q[t]) * x
        assert np.linalg.norm(tr.u[t] - expected) <= 1e-10 * max(1.0, np.linalg.norm(tr.u[t]))
        u_prev = tr.u[t]


def test_support_onebit_and_quantize_prune():
    X = rand(14, 8, 64)
    W = rand(15, 64, 6, low=-0.99, high=0.99)
    for spec in (ONEBIT, QPRUNE):
        res = compress_layer(W, X, X, CompressionConfig(spec, C=3.0))
        assert np.all(spec.in_support(res.Q))


def test_zero_column_falls_back_to_weight():
    X = rand(16, 4, 5)
    X[:, 2] = 0.0
    w = np.array([0.1, -0.2, 0.3, 0.4, -0.5])
    tr = compress_neuron(w, X, X, CompressionConfig(IDENT, C=2.0), derive_stream(0, 0, 0))
    assert tr.v[2] == 0.3
    tr = compress_neuron(w, X, X, CompressionConfig(ONEBIT, C=2.0, retain_traces=True), derive_stream(0, 0, 0))
    np.testing.assert_allclose(tr.u_final, X @ w - X @ tr.q, atol=1e-12)


def test_non_finite_reports_step():
    X = np.array([[1.0, 1e308, 1.0]])
    w = np.array([0.5, 0.5, 0.5])
    with pytest.raises(NonFiniteError, match="t=2"):
        compress_neuron(w, X, X, CompressionConfig(IDENT, C=1.0), derive_stream(0, 0, 0))


def test_weight_bound_warning():
    X = rand(17, 3, 4)
    with pytest.warns(WeightBoundWarning):
        tr = compress_neuron([1.5, 0, 0, 0], X, X, CompressionConfig(ONEBIT), derive_stream(0, 0, 0))
    assert tr.weight_bound_exceeded


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        compress_layer(np.zeros((3, 2)), np.zeros((4, 5)), np.zeros((4, 5)), CompressionConfig(ONEBIT))
    with pytest.raises(ShapeError):
        compress_layer(np.zeros((3, 2)), np.zeros((4, 3)), np.zeros((5, 3)), CompressionConfig(ONEBIT))


def test_config_validation():
    with pytest.raises(ValueError):
        CompressionConfig(ONEBIT, C=0.5)
    with pytest.raises(ValueError):
        CompressionConfig(ONEBIT, activation_mode="mixed")


# ---------------------------------------------------------------- layer determinism


def test_one_column_layer_equals_neuron():
    X = rand(18, 8, 30)
    w = rand(19, 30, low=-0.9, high=0.9)
    cfg = CompressionConfig(ONEBIT, C=2.0, master_seed=5)
    res = compress_layer(w[:, None], X, X, cfg, layer=3)
    tr = compress_neuron(w, X, X, cfg, derive_stream(5, 3, 0))
    assert np.array_equal(res.Q[:, 0], tr.q)
    assert np.array_equal(res.traces[0].u_norm_inf, tr.u_norm_inf)


def test_identity_layer_is_bitwise_copy():
    X = rand(20, 32, 128)
    W = rand(21, 128, 16, low=-0.9, high=0.9)
    res = compress_layer(W, X, X, CompressionConfig(IDENT, C=7.0))
    assert np.array_equal(res.Q, W)


def test_serial_equals_parallel():
    X = rand(22, 16, 48)
    W = rand(23, 48, 16, low=-0.9, high=0.9)
    serial = compress_layer(W, X, X, CompressionConfig(QPRUNE, C=2.0, master_seed=9, threads=1))
    for threads in (2, 3, 4, 16):
        par = compress_layer(W, X, X, CompressionConfig(QPRUNE, C=2.0, master_seed=9, threads=threads))
        assert par.Q.tobytes() == serial.Q.tobytes()
        assert all(np.array_equal(a.u_norm_inf, b.u_norm_inf) for a, b in zip(par.traces, serial.traces))


def test_block_columns_match_individual_runs():
    X = rand(24, 33, 40)
    W = rand(25, 40, 5, low=-0.9, high=0.9)
    cfg = CompressionConfig(ONEBIT, C=3.0, master_seed=4)
    res = compress_layer(W, X, X, cfg, layer=2)
    for j in range(5):
        tr = compress_neuron(W[:, j], X, X, cfg, derive_stream(4, 2, j))
        assert np.array_equal(tr.q, res.Q[:, j])
        assert np.array_equal(tr.u_final, res.traces[j].u_final)


def test_seed_determinism_and_sensitivity():
    X = rand(26, 8, 32)
    W = rand(27, 32, 4, low=-0.9, high=0.9)
    a = compress_layer(W, X, X, CompressionConfig(ONEBIT, C=2.0, master_seed=1))
    b = compress_layer(W, X, X, CompressionConfig(ONEBIT, C=2.0, master_seed=1))
    c = compress_layer(W, X, X, CompressionConfig(ONEBIT, C=2.0, master_seed=2))
    assert a.Q.tobytes() == b.Q.tobytes()
    assert not np.array_equal(a.Q, c.Q)


# ---------------------------------------------------------------- svd equivalence


def test_svd_equivalence_tall_data():
    for seed in range(5):
        X = rand(100 + seed, 64, 8)
        w = rand(200 + seed, 8, low=-0.9, high=0.9)
        S = svd(X).sigma_vt()
        cfg = CompressionConfig(ONEBIT, C=2.0)
        a = compress_neuron(w, X, X, cfg, derive_stream(seed, 0, 0))
        b = compress_neuron(w, S, S, cfg, derive_stream(seed, 0, 0))
        assert np.array_equal(a.q, b.q)
        ea, eb = np.linalg.norm(X @ (w - a.q)), np.linalg.norm(S @ (w - b.q))
        assert abs(ea - eb) <= 1e-8 * ea


# ---------------------------------------------------------------- network


def test_single_layer_network_is_layer():
    net = init_random_mlp([12, 5], K=1.0, seed=3)
    X = rand(28, 10, 12)
    cfg = CompressionConfig(ONEBIT, C=2.0, master_seed=6, activation_mode="paired")
    res = compress_network(net, X, cfg)
    lay = compress_layer(net.layers[0], X, X, cfg, layer=1)
    assert np.array_equal(res.layers[0].Q, lay.Q)


def test_identity_network_unchanged():
    net = init_random_mlp([8, 6, 4], K=1.0, seed=4)
    X = rand(29, 10, 8)
    res = compress_network(net, X, CompressionConfig(IDENT, activation_mode="paired"))
    for a, b in zip(forward(net, X), forward(res.model, X)):
        assert np.array_equal(a, b)


def test_paired_and_shared_modes_diverge():
    net = init_random_mlp([8, 6, 4], K=1.0, seed=5)
    X = rand(30, 10, 8)
    paired = compress_network(net, X, CompressionConfig(ONEBIT, C=2.0, master_seed=1, activation_mode="paired"))
    shared = compress_network(net, X, CompressionConfig(ONEBIT, C=2.0, master_seed=1, activation_mode="shared"))
    assert np.array_equal(paired.layers[0].Q, shared.layers[0].Q)
    Xt1 = forward(paired.model, X)[1]
    assert not np.array_equal(Xt1, forward(net, X)[1])
    assert np.array_equal(paired.compressed_inputs[1], Xt1)
    assert not np.array_equal(paired.layers[1].traces[0].v, shared.layers[1].traces[0].v)


def test_mutated_update_is_visible(monkeypatch):
    """The error update is the hook used by mutation tests elsewhere; make sure patching it bites."""
    X = rand(31, 4, 10)
    w = rand(32, 10, low=-0.9, high=0.9)
    cfg = CompressionConfig(ONEBIT, C=2.0)
    clean = compress_neuron(w, X, X, cfg, derive_stream(0, 0, 0))
    orig = compressor._update_error
    monkeypatch.setattr(compressor, "_update_error", lambda *a: 10.0 * orig(*a))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mutant = compress_neuron(w, X, X, cfg, derive_stream(0, 0, 0))
    assert mutant.u_norm_inf[-1] > 10 * clean.u_norm_inf[-1]
