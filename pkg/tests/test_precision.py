import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from nat2.core import AR1, SingularMatrixError, materialize
from nat2.precision import (
    BandedPrecision,
    apply_transform,
    assemble,
    estimate_banded_precision,
    gram,
    population_banded_precision,
)

AR1_INV3 = np.array([[1.5625, -0.9375, 0], [-0.9375, 2.125, -0.9375], [0, -0.9375, 1.5625]])


def normal_equations_fit(X, k):
    """Independent per-column fit through the Gram matrix."""
    n, p = X.shape
    A = np.zeros((p, p))
    D = np.empty(p)
    for l in range(p):
        lo = max(0, l - k)
        P = X[:, lo:l]
        y = X[:, l]
        if P.shape[1]:
            coef = np.linalg.solve(P.T @ P, P.T @ y)
            A[l, lo:l] = coef
            r = y - P @ coef
        else:
            r = y
        D[l] = r @ r / n
    return A, D


def test_k0_constant_column():
    bp = estimate_banded_precision(np.ones((4, 1)), 0)
    assert bp.D[0] == 1.0
    assert_array_equal(bp.A, 0)


def test_two_column_hand_example():
    X = np.array([[1.0, 2.0], [0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    bp = estimate_banded_precision(X, 1)
    assert bp.A[1, 0] == pytest.approx(1.0)
    assert bp.D[1] == pytest.approx(0.5)
    assert bp.D[0] == pytest.approx(0.5)


def test_k0_assembles_to_diagonal(rng):
    X = rng.standard_normal((7, 5))
    Om = assemble(estimate_banded_precision(X, 0))
    assert_allclose(Om, np.diag(7 / np.sum(X**2, axis=0)), rtol=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_matches_normal_equations(rng, k):
    X = rng.standard_normal((15, 9))
    bp = estimate_banded_precision(X, k)
    A, D = normal_equations_fit(X, k)
    assert_allclose(bp.A, A, atol=1e-10)
    assert_allclose(bp.D, D, rtol=1e-10)


def test_band_structure(rng):
    X = rng.standard_normal((20, 12))
    bp = estimate_banded_precision(X, 3)
    i, j = np.indices(bp.A.shape)
    outside = (j >= i) | (i - j > 3)
    assert np.all(bp.A[outside] == 0)
    assert np.all(bp.D > 0)
    assert np.all(np.linalg.eigvalsh(assemble(bp)) > 0)


def test_k_too_large(rng):
    with pytest.raises(ValueError):
        estimate_banded_precision(rng.standard_normal((5, 8)), 4)


def test_collinear_predecessors(rng):
    X = rng.standard_normal((10, 4))
    X[:, 2] = X[:, 1]
    with pytest.raises(SingularMatrixError) as exc:
        estimate_banded_precision(X, 2)
    assert exc.value.index in (2, 3)


def test_monotone_residual_variance(rng):
    X = rng.standard_normal((30, 10))
    Ds = np.array([estimate_banded_precision(X, k).D for k in range(6)])
    assert np.all(np.diff(Ds, axis=0) <= 1e-12)


def test_population_identity():
    pop = population_banded_precision(np.eye(5), 2)
    assert_array_equal(pop.A, 0)
    assert_array_equal(pop.D, 1)
    assert_allclose(assemble(pop), np.eye(5))


def test_population_ar1():
    S = materialize(AR1(0.6), 3)
    assert_allclose(assemble(population_banded_precision(S, 1)), AR1_INV3, atol=1e-12)
    assert_allclose(assemble(population_banded_precision(S, 0)), np.eye(3))


@pytest.mark.parametrize("k", [1, 2, 4, 9])
def test_band_exactness(k):
    S = materialize(AR1(0.6), 10)
    assert_allclose(assemble(population_banded_precision(S, k)), np.linalg.inv(S), atol=1e-10)


def test_assemble_2x2_symbolic():
    a, d1, d2 = 0.7, 2.0, 0.5
    bp = BandedPrecision(1, np.array([[0, 0], [a, 0.0]]), np.array([d1, d2]), 5)
    expected = [[1 / d1 + a * a / d2, -a / d2], [-a / d2, 1 / d2]]
    assert_allclose(assemble(bp), expected, rtol=1e-14)


def test_apply_transform_examples():
    bp = BandedPrecision(1, np.array([[0, 0], [1.0, 0]]), np.ones(2), 2)
    assert_allclose(apply_transform(np.array([[3.0, 5.0]]), bp), [[3.0, 2.0]])
    bp0 = BandedPrecision(0, np.zeros((2, 2)), np.ones(2), 2)
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_array_equal(apply_transform(X, bp0), X)


def test_gram_matches_dense(rng):
    X = rng.standard_normal((5, 4))
    bp = estimate_banded_precision(X, 2)
    assert_allclose(gram(X, bp), X @ assemble(bp) @ X.T, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(6, 25), p=st.integers(1, 15), k=st.integers(0, 3), seed=st.integers(0, 2**31))
def test_trace_of_gram_is_np(n, p, k, seed):
    # every column's residuals are normalised to mean square one
    X = np.random.default_rng(seed).standard_normal((n, p))
    G = gram(X, estimate_banded_precision(X, k))
    assert np.trace(G) == pytest.approx(n * p, rel=1e-10)


def test_deterministic_refit(rng):
    X = rng.standard_normal((40, 30))
    a, b = estimate_banded_precision(X, 3), estimate_banded_precision(X, 3)
    assert_array_equal(a.A, b.A)
    assert_array_equal(a.D, b.D)


@pytest.mark.slow
def test_consistency_in_n():
    S = materialize(AR1(0.6), 30)
    L = np.linalg.cholesky(S)
    target = np.linalg.inv(S)
    meds = []
    for n in (50, 200, 800):
        errs = []
        for seed in range(20):
            X = np.random.default_rng([seed, n]).standard_normal((n, 30)) @ L.T
            errs.append(np.linalg.norm(assemble(estimate_banded_precision(X, 1)) - target))
        meds.append(np.median(errs))
    assert meds[0] > meds[1] > meds[2]
