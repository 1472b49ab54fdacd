"""One-sample neighborhood-assisted Hotelling T^2 test."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import NumericalError, SingularMatrixError, as_data_matrix, norm_isf, norm_sf
from .precision import RSS_RTOL, apply_transform, assemble, estimate_banded_precision, gram


@dataclass
class TestReport:
    """Outcome of one neighborhood-assisted T^2 test.

    ``z_score = (statistic - centering) / sigma_hat`` and ``p_value`` is its
    upper normal tail.  ``reject`` is ``z_score >= z_alpha``.
    """

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    centering: float
    sigma_hat: float
    z_score: float
    p_value: float
    k: int
    alpha: float
    reject: bool
    n: int
    p: int
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def na_statistic(X, bp):
    """``n * Xbar' Omega_k Xbar`` for a fitted banded precision ``bp``."""
    X = as_data_matrix(X)
    n = X.shape[0]
    Z = apply_transform(X, bp)
    zbar = Z.mean(axis=0)
    return float(n * np.sum(zbar**2 / bp.D))


def regression_terms(X, k):
    """Per-column terms of the statistic from intercept regressions.

    Column ``l`` is regressed on an intercept plus its ``min(k, l)``
    predecessors.  With ``alpha_l`` the fitted intercept, ``e_l`` the
    residuals and ``F_l = 1'(I - H_l)1`` (``H_l`` the no-intercept projection
    onto the predecessors) the term is::

        F_l**2 alpha_l**2 / (e_l'e_l + F_l alpha_l**2)

    Returns a length-p array whose sum is the test statistic.
    """
    X = as_data_matrix(X)
    n, p = X.shape
    if k < 0:
        raise ValueError("k must be non-negative")
    if n <= k + 2:
        raise ValueError(f"regression form needs n > k + 2, got n={n}, k={k}")
    ones = np.ones(n)
    terms = np.empty(p)
    for l in range(p):
        lo = max(0, l - k)
        P = X[:, lo:l]
        design = np.column_stack([ones, P])
        if np.linalg.cond(design) > 1e12 or (P.shape[1] and np.linalg.cond(P) > 1e12):
            raise SingularMatrixError(f"predecessor block of column {l} is singular", index=l)
        beta, *_ = np.linalg.lstsq(design, X[:, l], rcond=None)
        resid = X[:, l] - design @ beta
        rss = resid @ resid
        if not rss > RSS_RTOL * max(X[:, l] @ X[:, l], 1e-300):
            raise SingularMatrixError(f"column {l} is perfectly predicted by its predecessors", index=l)
        if P.shape[1]:
            coef1, *_ = np.linalg.lstsq(P, ones, rcond=None)
            F = n - ones @ (P @ coef1)
        else:
            F = float(n)
        a = beta[0]
        denom = rss + F * a * a
        if not denom > 0:
            raise SingularMatrixError(f"column {l} is perfectly predicted by its predecessors", index=l)
        terms[l] = F * F * a * a / denom
    return terms


def na_statistic_regression_form(X, k):
    return float(np.sum(regression_terms(X, k)))


def u_variance(G):
    """U-statistic estimate of the null variance from an n x n Gram matrix.

    Evaluates::

        2/(n)_2 * sum_{i!=j} G_ij^2
          - 4/(n)_3 * sum* G_ij G_jk
          + 2/(n)_4 * sum* G_ij G_kl

    where ``(n)_r`` is the falling factorial and ``sum*`` runs over mutually
    distinct indices, in O(n^2).  ``G`` must be symmetric.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    if n < 4:
        raise ValueError(f"variance estimator needs n >= 4, got n={n}")
    G0 = G.copy()
    np.fill_diagonal(G0, 0.0)
    s1 = np.sum(G0**2)  # sum_{i!=j} G_ij^2
    r = G0.sum(axis=1)
    t = r.sum()  # sum_{i!=j} G_ij
    path = r @ r - s1  # distinct i, j, k: G_ij G_jk
    # t^2 over pairs (i!=j),(k!=l): 4 single-overlap patterns, 2 full overlaps
    disjoint = t * t - 4.0 * path - 2.0 * s1
    n = float(n)
    return (
        2.0 * s1 / (n * (n - 1))
        - 4.0 * path / (n * (n - 1) * (n - 2))
        + 2.0 * disjoint / (n * (n - 1) * (n - 2) * (n - 3))
    )


def variance_estimator(X, bp):
    """Estimated null variance of the statistic for data ``X``."""
    X = as_data_matrix(X, min_rows=4)
    return float(u_variance(gram(X, bp)))


def check_k_guard(k, n, force=False, ratio=0.1):
    limit = ratio * n
    if k > limit:
        if not force:
            raise ValueError(f"k must satisfy k ≤ n/10 (override with --force-k); got k={k}, n={n}")
        warnings.warn(f"k={k} exceeds n/10={limit:g}; results may be unreliable", stacklevel=3)


def run_test(X, k, alpha=0.05, force_k=False):
    """Run the one-sample test of H0: mu = 0 with band width ``k``.

    Parameters
    ----------
    X : (n, p) array_like
    k : int
        Band width; must satisfy ``k <= n / 10`` unless ``force_k``.
    alpha : float
        Significance level in (0, 1).

    Returns
    -------
    TestReport
    """
    X = as_data_matrix(X, min_rows=4)
    n, p = X.shape
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    check_k_guard(k, n, force_k)
    bp = estimate_banded_precision(X, k)
    G = gram(X, bp)
    stat = float(G.sum() / n)
    var = float(u_variance(G))
    if not (np.isfinite(var) and var > 0):
        raise NumericalError(f"estimated null variance is not positive ({var:.6g})")
    sigma = math.sqrt(var)
    z = (stat - p) / sigma
    return TestReport(
        statistic=stat,
        centering=float(p),
        sigma_hat=sigma,
        z_score=z,
        p_value=norm_sf(z),
        k=int(k),
        alpha=float(alpha),
        reject=bool(z >= norm_isf(alpha)),
        n=n,
        p=p,
    )


def population_variance(Sigma, pop, mu=None, n=1):
    """Population null and alternative variances of the statistic.

    Returns ``(2 tr{(Omega_k Sigma)^2}, 2 tr{(Omega_k Sigma)^2} + 4 n mu' Omega_k Sigma Omega_k mu)``
    where ``Omega_k`` is the assembled population banded precision.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    Om = assemble(pop)
    M = Om @ Sigma
    v0 = 2.0 * float(np.sum(M * M.T))
    if mu is None:
        return v0, v0
    mu = np.asarray(mu, dtype=float)
    w = Om @ mu
    return v0, v0 + 4.0 * n * float(w @ Sigma @ w)
