import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from nat2.core import AR1, SingularMatrixError, materialize
from nat2.natest import (
    na_statistic,
    na_statistic_regression_form,
    population_variance,
    regression_terms,
    run_test,
    u_variance,
    variance_estimator,
)
from nat2.precision import assemble, estimate_banded_precision, gram, population_banded_precision


def brute_force_variance(G):
    n = G.shape[0]
    idx = range(n)
    s1 = sum(G[i, j] ** 2 for i, j in itertools.permutations(idx, 2))
    s2 = sum(G[i, j] * G[j, k] for i, j, k in itertools.permutations(idx, 3))
    s3 = sum(G[i, j] * G[k, l] for i, j, k, l in itertools.permutations(idx, 4))
    return (
        2 * s1 / (n * (n - 1))
        - 4 * s2 / (n * (n - 1) * (n - 2))
        + 2 * s3 / (n * (n - 1) * (n - 2) * (n - 3))
    )


def test_scalar_examples():
    X = np.array([[1.0], [1.0]])
    assert na_statistic(X, estimate_banded_precision(X, 0)) == pytest.approx(2.0)
    X = np.array([[1.0], [-1.0]])
    assert na_statistic(X, estimate_banded_precision(X, 0)) == 0.0


def test_quadratic_form_matches_dense(rng):
    X = rng.standard_normal((6, 4))
    bp = estimate_banded_precision(X, 1)
    xbar = X.mean(axis=0)
    assert na_statistic(X, bp) == pytest.approx(6 * xbar @ assemble(bp) @ xbar, rel=1e-12)


def test_regression_form_small_instance(rng):
    X = rng.standard_normal((6, 4))
    assert na_statistic_regression_form(X, 1) == pytest.approx(
        na_statistic(X, estimate_banded_precision(X, 1)), rel=1e-9
    )


def test_regression_form_k0(rng):
    X = rng.standard_normal((9, 5))
    n = 9
    expected = np.sum(n * X.mean(axis=0) ** 2 / (np.sum(X**2, axis=0) / n))
    assert na_statistic_regression_form(X, 0) == pytest.approx(expected, rel=1e-12)


def test_regression_form_collinear(rng):
    X = rng.standard_normal((10, 3))
    X[:, 1] = X[:, 0]
    with pytest.raises(SingularMatrixError):
        regression_terms(X, 1)


def test_equivalence_fifty_instances():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n, p, k = rng.integers(8, 21), rng.integers(3, 13), rng.integers(0, 4)
        X = rng.standard_normal((n, p)) + rng.normal(0, 0.5, p)
        a = na_statistic(X, estimate_banded_precision(X, k))
        b = na_statistic_regression_form(X, k)
        assert b == pytest.approx(a, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(6, 30), p=st.integers(1, 12), k=st.integers(0, 3), seed=st.integers(0, 2**31), shift=st.floats(-1, 1))
def test_formulation_equivalence_property(n, p, k, seed, shift):
    if n <= k + 2:
        return
    X = np.random.default_rng(seed).standard_normal((n, p)) + shift
    terms = regression_terms(X, k)
    stat = na_statistic(X, estimate_banded_precision(X, k))
    assert terms.sum() == pytest.approx(stat, rel=1e-9)
    assert stat >= 0
    assert np.all(terms >= 0)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(6, 20), p=st.integers(1, 10), k=st.integers(0, 3), seed=st.integers(0, 2**31))
def test_diagonal_scaling_invariance(n, p, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p)) + 0.3
    c = rng.uniform(0.1, 10, p)
    a = na_statistic(X, estimate_banded_precision(X, k))
    b = na_statistic(X * c, estimate_banded_precision(X * c, k))
    assert b == pytest.approx(a, rel=1e-9)


def test_terms_bounded_by_F(rng):
    X = rng.standard_normal((12, 6)) + 2.0
    terms = regression_terms(X, 2)
    assert np.all(terms <= 12 + 1e-9)


def test_u_variance_constant_gram():
    assert u_variance(np.full((6, 6), 3.0)) == pytest.approx(0.0, abs=1e-12)


def test_identical_rows_give_zero_variance():
    X = np.tile(np.array([[1.0, -2.0, 0.5]]), (6, 1))
    assert variance_estimator(X, estimate_banded_precision(X, 0)) == pytest.approx(0.0, abs=1e-12)


def test_variance_matches_brute_force(rng):
    X = rng.standard_normal((6, 3))
    bp = estimate_banded_precision(X, 1)
    assert variance_estimator(X, bp) == pytest.approx(brute_force_variance(gram(X, bp)), abs=1e-10)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_u_variance_brute_force_sizes(n):
    rng = np.random.default_rng(n)
    A = rng.standard_normal((n, n))
    G = A + A.T
    assert u_variance(G) == pytest.approx(brute_force_variance(G), abs=1e-10)


def test_variance_needs_four_rows(rng):
    with pytest.raises(ValueError):
        u_variance(np.eye(3))


def test_report_fields(rng):
    X = rng.standard_normal((40, 30))
    rep = run_test(X, 2, alpha=0.05)
    assert rep.centering == 30
    assert rep.sigma_hat > 0
    assert rep.z_score == pytest.approx((rep.statistic - 30) / rep.sigma_hat)
    assert 0 <= rep.p_value <= 1
    assert rep.reject == (rep.p_value <= 0.05)


def test_k_guard(rng):
    X = rng.standard_normal((60, 10))
    with pytest.raises(ValueError, match="n/10"):
        run_test(X, 59)
    with pytest.warns(UserWarning):
        run_test(X, 7, force_k=True)


def test_bad_alpha(rng):
    with pytest.raises(ValueError):
        run_test(rng.standard_normal((20, 3)), 0, alpha=1.5)


def test_population_variance_examples():
    assert population_variance(np.eye(4), population_banded_precision(np.eye(4), 2)) == (8.0, 8.0)
    S = materialize(AR1(0.6), 3)
    v0, v1 = population_variance(S, population_banded_precision(S, 1), np.zeros(3), n=10)
    assert v0 == pytest.approx(6.0) and v1 == pytest.approx(6.0)


def test_population_variance_alternative():
    S = materialize(AR1(0.6), 5)
    pop = population_banded_precision(S, 1)
    mu = np.array([0.3, 0, 0, 0.1, 0])
    Om = assemble(pop)
    _, v1 = population_variance(S, pop, mu, n=20)
    expected = 2 * np.trace(Om @ S @ Om @ S) + 4 * 20 * mu @ Om @ S @ Om @ mu
    assert v1 == pytest.approx(expected, rel=1e-12)


@pytest.mark.slow
def test_null_z_scores_sanity():
    S = materialize(AR1(0.6), 200)
    L = np.linalg.cholesky(S)
    zs = []
    for rep in range(1000):
        X = np.random.default_rng([11, rep]).standard_normal((60, 200)) @ L.T
        zs.append(run_test(X, 3).z_score)
    zs = np.array(zs)
    assert -0.15 <= zs.mean() <= 0.15
    assert 0.8 <= zs.var() <= 1.25
