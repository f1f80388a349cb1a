import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spfc import bounds
from spfc.bounds import BoundInputs
from spfc.numerics import max_eigenvalue


def unit_inputs(N0=16, C=1.0, M=1.0, K=1.0, p=1.0, N1=1, m=1, norms=None):
    norms = np.ones(N0) if norms is None else np.asarray(norms, dtype=float)
    return BoundInputs(C=C, M=M, K=K, p=p, N0=N0, N1=N1, m=m, column_norms=norms)


# ---------------------------------------------------------------- beta


def test_beta_unit_columns_is_half_pi():
    beta = bounds.beta_sequence(unit_inputs(N0=5))
    assert beta[0] == 0.0
    np.testing.assert_allclose(beta[1:], 1.5707963267948966, rtol=1e-15)


def test_beta_homogeneity():
    norms = np.random.default_rng(0).uniform(0.1, 2.0, 12)
    base = bounds.beta_sequence(unit_inputs(N0=12, norms=norms))
    np.testing.assert_allclose(bounds.beta_sequence(unit_inputs(N0=12, M=2.0, norms=norms)), 4 * base, rtol=1e-14)
    np.testing.assert_allclose(bounds.beta_sequence(unit_inputs(N0=12, C=3.0, norms=norms)), 3 * base, rtol=1e-14)


def test_beta_nondecreasing():
    norms = np.random.default_rng(1).uniform(0.0, 2.0, 40)
    assert np.all(np.diff(bounds.beta_sequence(unit_inputs(N0=40, norms=norms))) >= 0)


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        unit_inputs(C=0.5)
    with pytest.raises(ValueError):
        unit_inputs(p=0.9)
    with pytest.raises(ValueError):
        unit_inputs(N0=2, norms=[1.0, -1.0])
    with pytest.raises(ValueError):
        unit_inputs(N0=3, norms=[1.0, 1.0])


# ---------------------------------------------------------------- sigma recursion


def test_sigma_first_step():
    x = np.array([1.0, -2.0, 0.5])
    sig = bounds.sigma_recursion(x[:, None], C=3.0, M=2.0)
    np.testing.assert_allclose(sig[1], math.pi * 4.0 / 2.0 * np.outer(x, x), rtol=1e-14)
    assert np.all(sig[0] == 0)


def test_sigma_scalar_case_is_constant():
    sig = bounds.sigma_recursion(np.ones((1, 10)), C=1.0, M=3.0)
    for s in sig[1:]:
        assert s[0, 0] == pytest.approx(math.pi * 9.0 / 2.0, rel=1e-15)


def test_sigma_zero_column_names_step():
    X = np.ones((2, 4))
    X[:, 2] = 0.0
    with pytest.raises(ValueError, match="t=3"):
        bounds.sigma_recursion(X, C=1.0, M=1.0)


@pytest.mark.parametrize("C", [1.0, 2.0, 8.0])
def test_sigma_dominated_by_beta(C):
    rng = np.random.default_rng(int(C))
    X = rng.normal(size=(5, 20))
    beta = bounds.beta_sequence(BoundInputs.from_data(X, C=C, K=1.0, M=1.0))
    for t, s in enumerate(bounds.sigma_recursion(X, C=C, M=1.0)):
        assert max_eigenvalue(s) <= beta[t] * (1 + 1e-9) + 1e-300


# ---------------------------------------------------------------- gaussian tail


def test_gaussian_tail_values():
    assert bounds.gaussian_tail(0.0, 1.0, 3) == 1.0
    assert bounds.gaussian_tail(10.0, 1.0, 1) == pytest.approx(1.964051856730834e-11, rel=1e-12)


@settings(max_examples=50)
@given(gamma=st.floats(1e-12, 1.0), sigma2=st.floats(1e-3, 1e3), n=st.integers(1, 1000))
def test_tail_radius_inverts_tail(gamma, sigma2, n):
    a = bounds.tail_radius(gamma, sigma2, n)
    assert bounds.gaussian_tail(a, sigma2, n) == pytest.approx(gamma, rel=1e-9)


# ---------------------------------------------------------------- kappa and failure mass


def test_kappa_prune_reference_value():
    assert bounds.kappa(unit_inputs(N0=16), "prune") == pytest.approx(4.173809857004607, rel=1e-12)


def test_kappa_onebit_is_four_times_prune():
    inp = unit_inputs(N0=64, C=4.0, norms=np.linspace(0.5, 1.5, 64))
    assert bounds.kappa(inp, "onebit_quantize") == pytest.approx(4 * bounds.kappa(inp, "prune"), rel=1e-14)
    assert bounds.kappa(inp, "quantize_prune") == pytest.approx(2 * bounds.kappa(inp, "prune"), rel=1e-14)


def test_kappa_onebit_reference_value():
    inp = unit_inputs(N0=64, C=4.0)
    assert bounds.kappa(inp, "onebit_quantize") == pytest.approx(40.894817732240426, rel=1e-12)


def test_kappa_scales_as_sqrt_c():
    for kind in ("onebit_quantize", "prune", "quantize_prune"):
        a = bounds.kappa(unit_inputs(N0=32, C=1.0), kind)
        b = bounds.kappa(unit_inputs(N0=32, C=9.0), kind)
        assert b == pytest.approx(3 * a, rel=1e-14)


def test_kappa_needs_two_columns():
    with pytest.raises(ValueError):
        bounds.kappa(unit_inputs(N0=1), "prune")


def test_prune_failure_mass_reference():
    inp = unit_inputs(N0=256, N1=16, m=32, p=2.0)
    assert bounds.failure_probability(inp, "prune") == pytest.approx(0.011048543456039806, rel=1e-12)


def test_support_mass_starts_at_second_column():
    # two unit columns: a single t = 2 term, no t = 1 term
    inp = unit_inputs(N0=2, C=1.0, N1=1, norms=[1.0, 1.0])
    expected = math.sqrt(2) * math.exp(-1.0 / (32 * math.pi))
    assert bounds.support_failure_mass(inp, "onebit_quantize") == pytest.approx(expected, rel=1e-14)
    assert bounds.support_failure_mass(inp, "quantize_prune") == pytest.approx(
        math.sqrt(2) * math.exp(-1.0 / (8 * math.pi)), rel=1e-14)
    assert bounds.support_failure_mass(inp, "prune") == 0.0


def test_large_c_kills_support_mass():
    norms = np.random.default_rng(2).uniform(0.5, 1.0, 64)
    masses = [bounds.support_failure_mass(unit_inputs(N0=64, C=C, norms=norms), "onebit_quantize")
              for C in (1e2, 1e4, 1e6)]
    assert masses[0] > masses[1] > masses[2] and masses[2] < 1e-300


def test_failure_mass_clamped_and_monotone_in_p():
    vals = [bounds.failure_probability(unit_inputs(N0=128, N1=8, m=16, C=50.0, p=p), "onebit_quantize")
            for p in (1.0, 1.5, 2.0, 3.0)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert bounds.failure_probability(unit_inputs(N0=4, m=100), "prune") == 1.0
