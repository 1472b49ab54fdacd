"""Banded Cholesky estimates of a precision matrix.

Each variable is regressed on its ``k`` immediate predecessors.  Writing the
regression coefficients into a strictly lower-triangular, ``k``-banded matrix
``A`` and the residual variances into ``D`` gives the precision estimate

    Omega_k = (I - A)' D^{-1} (I - A).

Two constructors share that representation: :func:`estimate_banded_precision`
fits the regressions on raw (uncentred, no-intercept) sample columns, and
:func:`population_banded_precision` evaluates the same projections from a
known covariance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SingularMatrixError, as_data_matrix, as_symmetric

# predecessor blocks with condition number above this are rejected
COND_LIMIT = 1e12
# relative residual sum of squares treated as an exact fit
RSS_RTOL = 1e-24


@dataclass(frozen=True)
class BandedPrecision:
    """Sample banded precision ``(I - A)' diag(D)^{-1} (I - A)``.

    Attributes
    ----------
    k : int
        Band width.
    A : (p, p) array
        Strictly lower triangular regression coefficients; row ``l`` is
        nonzero only in columns ``max(0, l - k) .. l - 1``.
    D : (p,) array
        Residual variances, residual sum of squares divided by ``n``.
    n_used : int
        Number of samples the regressions were fitted on.
    """

    k: int
    A: np.ndarray
    D: np.ndarray
    n_used: int

    @property
    def p(self):
        return self.D.shape[0]


@dataclass(frozen=True)
class PopulationBandedPrecision:
    """Population counterpart built from an exact covariance matrix."""

    k: int
    A: np.ndarray
    D: np.ndarray

    @property
    def p(self):
        return self.D.shape[0]


def _check_band(k):
    if int(k) != k or k < 0:
        raise ValueError(f"band width k must be a non-negative integer, got {k!r}")
    return int(k)


def _lstsq_banded(X, y_cols, k):
    """Batched least squares of ``X[:, l]`` on ``X[:, l-k:l]`` for l in y_cols.

    All columns in ``y_cols`` must have exactly ``k`` predecessors.
    Returns (coef, rss) with shapes (len(y_cols), k) and (len(y_cols),).
    """
    y_cols = np.asarray(y_cols)
    windows = np.lib.stride_tricks.sliding_window_view(X, k, axis=1)
    # windows[:, j] holds columns j..j+k-1; predecessor block of l starts at l-k
    B = np.ascontiguousarray(np.moveaxis(windows[:, y_cols - k], 1, 0))  # (m, n, k)
    y = X[:, y_cols].T  # (m, n)
    Q, R = np.linalg.qr(B)
    sv = np.linalg.svd(R, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = sv[:, 0] / sv[:, -1]
    bad = np.flatnonzero(~(cond <= COND_LIMIT))
    if bad.size:
        l = int(y_cols[bad[0]])
        raise SingularMatrixError(
            f"predecessor block of column {l} is singular "
            f"(condition number {cond[bad[0]]:.3g})",
            index=l,
            value=float(cond[bad[0]]),
        )
    qty = np.einsum("mnk,mn->mk", Q, y)
    coef = np.linalg.solve(R, qty[..., None])[..., 0]
    fitted = np.einsum("mnk,mk->mn", B, coef)
    rss = np.sum((y - fitted) ** 2, axis=1)
    return coef, rss


def estimate_banded_precision(X, k):
    """Fit the banded Cholesky precision estimator to data.

    Column ``l`` is regressed, by least squares without intercept, on its
    ``min(k, l)`` predecessors (0-based).  ``D[l]`` is the residual sum of
    squares over ``n``; for ``k = 0`` this is ``sum_i X_il**2 / n``.

    Parameters
    ----------
    X : (n, p) array_like
        Observations in rows.
    k : int
        Band width, ``0 <= k <= n - 2``.

    Raises
    ------
    ValueError
        If ``k`` is out of range.
    SingularMatrixError
        If a predecessor block is numerically singular or a residual
        variance is zero.
    """
    X = as_data_matrix(X)
    k = _check_band(k)
    n, p = X.shape
    if k > n - 2:
        raise ValueError(f"band width k={k} requires n > k + 1, got n={n}")

    A = np.zeros((p, p))
    rss = np.empty(p)
    kk = min(k, p - 1)
    # leading columns have fewer than k predecessors
    for l in range(min(kk, p)):
        if l == 0:
            rss[0] = X[:, 0] @ X[:, 0]
            continue
        c, r = _lstsq_banded(X[:, : l + 1], [l], l)
        A[l, :l] = c[0]
        rss[l] = r[0]
    if kk == 0:
        rss[:] = np.einsum("ij,ij->j", X, X)
    elif kk < p:
        cols = np.arange(kk, p)
        coef, r = _lstsq_banded(X, cols, kk)
        rows = np.repeat(cols, kk)
        offs = (cols[:, None] - kk + np.arange(kk)[None, :]).ravel()
        A[rows, offs] = coef.ravel()
        rss[cols] = r

    D = rss / n
    # residual at rounding level relative to the column's own energy
    zero = np.flatnonzero(~(rss > RSS_RTOL * np.maximum(np.einsum("ij,ij->j", X, X), 1e-300)))
    if zero.size:
        l = int(zero[0])
        raise SingularMatrixError(
            f"column {l} has zero residual variance (perfectly predicted)", index=l, value=0.0
        )
    return BandedPrecision(k=k, A=A, D=D, n_used=n)


def population_banded_precision(Sigma, k):
    """Banded Cholesky factors computed from a known covariance matrix.

    Row ``l`` of ``A`` is ``Sigma[l, P] Sigma[P, P]^{-1}`` for the
    predecessor set ``P = max(0, l - k) .. l - 1`` and
    ``D[l] = Sigma[l, l] - Sigma[l, P] Sigma[P, P]^{-1} Sigma[P, l]``.
    """
    Sigma = as_symmetric(Sigma)
    k = _check_band(k)
    p = Sigma.shape[0]
    A = np.zeros((p, p))
    D = np.diag(Sigma).astype(float).copy()
    for l in range(1, p):
        lo = max(0, l - k)
        if lo == l:
            continue
        S_pp = Sigma[lo:l, lo:l]
        s_lp = Sigma[l, lo:l]
        cond = np.linalg.cond(S_pp)
        if not cond <= COND_LIMIT:
            raise SingularMatrixError(
                f"leading block for column {l} is singular (condition number {cond:.3g})",
                index=l,
                value=float(cond),
            )
        coef = np.linalg.solve(S_pp, s_lp)
        A[l, lo:l] = coef
        D[l] = Sigma[l, l] - s_lp @ coef
    if np.any(D <= 0):
        l = int(np.flatnonzero(D <= 0)[0])
        raise SingularMatrixError(f"conditional variance of column {l} is not positive", index=l)
    return PopulationBandedPrecision(k=k, A=A, D=D)


def assemble(bp):
    """Dense ``(I - A)' diag(D)^{-1} (I - A)``."""
    p = bp.D.shape[0]
    L = np.eye(p) - bp.A
    out = (L.T / bp.D) @ L
    return (out + out.T) / 2


def apply_transform(X, bp):
    """Rows ``(I - A) X_i``, i.e. the regression residuals of each column.

    With ``Z = apply_transform(X, bp)``, ``X Omega X' == (Z / D) @ Z.T``,
    so the Gram matrix never needs the dense precision.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != bp.D.shape[0]:
        raise ValueError(f"data has shape {X.shape}, precision has p={bp.D.shape[0]}")
    return X - X @ bp.A.T


def gram(X, bp):
    """n x n matrix of ``X_i' Omega X_j``."""
    Z = apply_transform(X, bp)
    G = (Z / bp.D) @ Z.T
    return (G + G.T) / 2
