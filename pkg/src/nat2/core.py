"""Shared matrix types, covariance models and small numerical primitives."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

# smallest eigenvalue must exceed this fraction of the largest
PD_RTOL = 1e-10
# eigenvalue cutoff for fractional powers
POWER_RTOL = 1e-12


class NumericalError(RuntimeError):
    """A computation hit a numerically degenerate configuration."""


class SingularMatrixError(NumericalError):
    """Matrix is singular or too ill-conditioned to use.

    ``index`` names the offending eigenvalue or column (0-based) when known.
    """

    def __init__(self, message, index=None, value=None):
        super().__init__(message)
        self.index = index
        self.value = value


def as_data_matrix(X, min_rows=2):
    """Validate an n x p observation matrix (rows are samples)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"data must be a 2-d array, got shape {X.shape}")
    n, p = X.shape
    if n < min_rows:
        raise ValueError(f"need at least {min_rows} samples, got n={n}")
    if p < 1:
        raise ValueError("need at least one variable")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise ValueError(f"non-finite entry at row {bad[0]}, column {bad[1]}")
    return X


def as_symmetric(S, tol=1e-12):
    """Validate a square symmetric matrix and return it as float array."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    diff = np.abs(S - S.T)
    scale = np.maximum(1.0, np.abs(S))
    if np.any(diff > tol * scale):
        i, j = np.unravel_index(np.argmax(diff / scale), S.shape)
        raise ValueError(f"matrix is not symmetric at ({i}, {j})")
    return S


def check_positive_definite(S, rtol=PD_RTOL):
    """Raise SingularMatrixError unless min eigenvalue > rtol * max eigenvalue."""
    w = np.linalg.eigvalsh(S)
    if w[-1] <= 0 or w[0] <= rtol * w[-1]:
        raise SingularMatrixError(
            f"matrix is not positive definite: smallest eigenvalue {w[0]:.6g}, "
            f"largest {w[-1]:.6g}",
            index=0,
            value=float(w[0]),
        )
    return w


# ---------------------------------------------------------------------------
# covariance models


@dataclass(frozen=True)
class AR1:
    """sigma_ij = rho**|i - j|"""

    rho: float = 0.6

    def materialize(self, p):
        idx = np.arange(p)
        return float(self.rho) ** np.abs(idx[:, None] - idx[None, :])


@dataclass(frozen=True)
class BlockDiag:
    """Unit diagonal with equicorrelated blocks along the diagonal.

    ``n_blocks`` blocks of ``block_size`` consecutive variables get
    correlation ``rho``; every variable outside those blocks is uncorrelated.
    The default (4 blocks of size 2) covers only the first 8 variables.
    ``n_blocks=None`` fills as many whole blocks as fit in ``p``.
    """

    block_size: int = 2
    rho: float = 0.6
    n_blocks: int | None = 4

    def materialize(self, p):
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        S = np.eye(p)
        nb = p // self.block_size
        if self.n_blocks is not None:
            nb = min(nb, self.n_blocks)
        for b in range(nb):
            sl = slice(b * self.block_size, (b + 1) * self.block_size)
            S[sl, sl] = self.rho
        np.fill_diagonal(S, 1.0)
        return S


@dataclass(frozen=True)
class RandomSparse:
    """Sigma = Gamma Gamma' + I with a few signed Unif(low, high) entries per row."""

    nonzeros_per_row: int = 4
    magnitude_range: tuple = (1.0, 2.0)
    seed: int = 0

    def materialize(self, p):
        m = min(self.nonzeros_per_row, p)
        low, high = self.magnitude_range
        rng = np.random.default_rng(self.seed)
        gamma = np.zeros((p, p))
        for i in range(p):
            cols = rng.choice(p, size=m, replace=False)
            mags = rng.uniform(low, high, size=m)
            signs = rng.choice([-1.0, 1.0], size=m)
            gamma[i, cols] = mags * signs
        return gamma @ gamma.T + np.eye(p)


@dataclass(frozen=True)
class EqualCorr:
    """Unit variances, every pair correlated at ``rho``."""

    rho: float = 0.6

    def materialize(self, p):
        S = np.full((p, p), float(self.rho))
        np.fill_diagonal(S, 1.0)
        return S


@dataclass(frozen=True)
class Explicit:
    matrix: np.ndarray = field(compare=False, repr=False)

    def materialize(self, p):
        S = as_symmetric(self.matrix)
        if S.shape[0] != p:
            raise ValueError(f"explicit matrix is {S.shape[0]}x{S.shape[0]}, requested p={p}")
        return S.copy()


CovarianceModel = Union[AR1, BlockDiag, RandomSparse, EqualCorr, Explicit]

# letters used for the four simulation designs
SIMULATION_MODELS = {
    "a": AR1(0.6),
    "b": BlockDiag(2, 0.6, 4),
    "c": RandomSparse(4, (1.0, 2.0), 0),
    "d": EqualCorr(0.6),
}


def model_from_letter(letter, seed=0):
    letter = letter.lower()
    if letter not in SIMULATION_MODELS:
        raise ValueError(f"unknown covariance model {letter!r}; expected one of a, b, c, d")
    if letter == "c":
        return RandomSparse(4, (1.0, 2.0), seed)
    return SIMULATION_MODELS[letter]


def materialize(model, p):
    """Return the dense p x p covariance for ``model``, checked to be SPD."""
    if p < 1:
        raise ValueError("p must be >= 1")
    S = model.materialize(p)
    S = as_symmetric(S)
    check_positive_definite(S)
    return S


# ---------------------------------------------------------------------------
# spectral helpers


def matrix_power(S, eta, rtol=POWER_RTOL):
    """Symmetric matrix power S**eta via eigendecomposition.

    Parameters
    ----------
    S : (p, p) array
        Symmetric positive definite matrix.
    eta : float
        Real exponent.
    rtol : float
        Eigenvalues at or below ``rtol * max eigenvalue`` are treated as zero
        and raise :class:`SingularMatrixError`.

    Returns
    -------
    (p, p) array, symmetric.
    """
    S = as_symmetric(S)
    w, V = np.linalg.eigh(S)
    tol = rtol * max(w[-1], 0.0)
    bad = np.flatnonzero(w <= tol)
    if bad.size:
        raise SingularMatrixError(
            f"eigenvalue {bad[0]} is {w[bad[0]]:.6g}, not above tolerance {tol:.3g}",
            index=int(bad[0]),
            value=float(w[bad[0]]),
        )
    if eta == 1:
        wp = w
    elif eta == 0:
        wp = np.ones_like(w)
    else:
        wp = w ** eta
    out = (V * wp) @ V.T
    return (out + out.T) / 2


def norm_sf(z):
    """Upper-tail standard normal probability."""
    return float(special.ndtr(-z))


def norm_cdf(z):
    return float(special.ndtr(z))


def norm_isf(alpha):
    """Upper alpha-quantile z_alpha of N(0, 1)."""
    return float(-special.ndtri(alpha))
