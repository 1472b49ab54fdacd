"""Known-covariance analysis of the statistic family n Xbar' Sigma^(2 eta) Xbar.

Everything here works in the eigenbasis of Sigma: with eigenvalues ``lam``
and ``c = V' mu``, every trace and quadratic form reduces to a weighted sum
``sum(c**2 * lam**a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_data_matrix, as_symmetric, check_positive_definite, matrix_power, norm_cdf, norm_isf

ETAS = (-1.0, -0.5, 0.0)
# finite-sample stand-ins for the asymptotic regime conditions
LOCAL_RATIO = 0.1
NONLOCAL_RATIO = 10.0


@dataclass(frozen=True)
class OracleSpec:
    Sigma: np.ndarray
    mu: np.ndarray
    n: int
    eta: float = -0.5
    alpha: float = 0.05

    def with_eta(self, eta):
        return OracleSpec(self.Sigma, self.mu, self.n, eta, self.alpha)


@dataclass
class SpectralSummary:
    """Ascending eigen-system of Sigma with the two block cut points.

    ``m1`` and ``m2`` are 1-based: the bottom block is eigenvectors
    ``0 .. m1-1`` and the top block is ``m2-1 .. p-1``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lambda_bar_sq: float
    lambda_tilde_sq: float
    m1: int
    m2: int


class _Eigen:
    """Cached eigendecomposition, reused across eta values."""

    def __init__(self, Sigma):
        Sigma = as_symmetric(Sigma)
        check_positive_definite(Sigma)
        self.w, self.V = np.linalg.eigh(Sigma)

    def trace(self, a):
        return float(np.sum(self.w**a))

    def quad(self, mu, a):
        c = self.V.T @ mu
        return float(np.sum(c * c * self.w**a))


def _moments(spec, eig=None):
    eig = eig or _Eigen(spec.Sigma)
    mu = np.asarray(spec.mu, dtype=float)
    eta = spec.eta
    signal = spec.n * eig.quad(mu, 2 * eta)
    v0 = 2.0 * eig.trace(2 + 4 * eta)
    v1 = v0 + 4.0 * spec.n * eig.quad(mu, 1 + 4 * eta)
    return signal, v0, v1, eig


def oracle_statistic(X, spec):
    """``n Xbar' Sigma^(2 eta) Xbar`` using the true covariance."""
    X = as_data_matrix(X, min_rows=1)
    xbar = X.mean(axis=0)
    M = matrix_power(spec.Sigma, 2 * spec.eta)
    return float(X.shape[0] * xbar @ M @ xbar)


def oracle_null_moments(Sigma, eta):
    """Null mean ``tr(Sigma^(1+2 eta))`` and sd ``sqrt(2 tr(Sigma^(2+4 eta)))``."""
    eig = _Eigen(Sigma)
    return eig.trace(1 + 2 * eta), math.sqrt(2.0 * eig.trace(2 + 4 * eta))


def oracle_snr(spec):
    signal, _, v1, _ = _moments(spec)
    return signal / math.sqrt(v1)


def oracle_power(spec, _eig=None):
    """Asymptotic power ``Phi(-z_alpha sigma0/sigma + signal/sigma)``."""
    signal, v0, v1, _ = _moments(spec, _eig)
    s0, s1 = math.sqrt(v0), math.sqrt(v1)
    return norm_cdf(-norm_isf(spec.alpha) * s0 / s1 + signal / s1)


def spectral_summary(Sigma):
    eig = _Eigen(Sigma)
    w, V = eig.w, eig.V
    p = w.size
    lbar_sq = float(np.sum(w**2) / p)
    ltil_sq = float(np.sum(w**-2.0) / p)
    lbar = math.sqrt(lbar_sq)
    linv = 1.0 / math.sqrt(ltil_sq)
    # relative slack so exact ties (e.g. Sigma = I) are not lost to rounding
    eps = 1e-12
    lo, hi = min(lbar, linv), max(lbar, linv)
    below = np.flatnonzero(w <= lo * (1 + eps))
    above = np.flatnonzero(w >= hi * (1 - eps))
    m1 = int(below[-1]) + 1 if below.size else 0
    m2 = int(above[0]) + 1 if above.size else p + 1
    return SpectralSummary(w, V, lbar_sq, ltil_sq, m1, m2)


@dataclass
class OrderingReport:
    powers: dict
    local_ratios: dict
    block: str
    ordering_holds: bool
    projection_residual: float


def _block_residual(mu, basis):
    if basis.shape[1] == 0:
        return float(np.linalg.norm(mu))
    return float(np.linalg.norm(mu - basis @ (basis.T @ mu)))


def eigenblock_ordering_check(Sigma, mu, n, alpha=0.05, tol=1e-8, local_ratio=LOCAL_RATIO):
    """Compare oracle powers at eta = -1, -1/2, 0 for mu in an eigen-block.

    ``mu`` must lie (up to ``tol`` relative residual) in the span of the
    bottom eigenvectors ``1..m1`` or the top eigenvectors ``m2..p``, and the
    local-alternative ratio ``n mu' Sigma^(1+4 eta) mu / tr(Sigma^(2+4 eta))``
    must stay below ``local_ratio`` for all three eta.  For the bottom block
    the expected ordering is ``beta(-1) >= beta(-1/2) >= beta(0)``; for the top
    block it is reversed.

    Raises
    ------
    ValueError
        If ``mu`` is in neither block or the local condition fails.
    """
    Sigma = as_symmetric(Sigma)
    mu = np.asarray(mu, dtype=float)
    summ = spectral_summary(Sigma)
    V = summ.eigenvectors
    scale = max(1.0, float(np.linalg.norm(mu)))
    res_bottom = _block_residual(mu, V[:, : summ.m1])
    res_top = _block_residual(mu, V[:, summ.m2 - 1 :])
    in_bottom = res_bottom <= tol * scale
    in_top = res_top <= tol * scale
    if not (in_bottom or in_top):
        raise ValueError(
            "mu is not in the bottom or top eigen-block "
            f"(residuals {res_bottom:.3g} and {res_top:.3g})"
        )

    eig = _Eigen(Sigma)
    ratios = {}
    for eta in ETAS:
        ratios[eta] = n * eig.quad(mu, 1 + 4 * eta) / eig.trace(2 + 4 * eta)
    if max(ratios.values()) >= local_ratio:
        raise ValueError(f"local-alternative condition not met: ratios {ratios}")

    spec = OracleSpec(Sigma, mu, n, 0.0, alpha)
    beta = {eta: oracle_power(spec.with_eta(eta), eig) for eta in ETAS}
    b1, bh, b0 = beta[-1.0], beta[-0.5], beta[0.0]
    holds = True
    if in_bottom:
        holds &= b1 >= bh >= b0
    if in_top:
        holds &= b1 <= bh <= b0
    block = "both" if in_bottom and in_top else ("bottom" if in_bottom else "top")
    return OrderingReport(
        powers=beta,
        local_ratios=ratios,
        block=block,
        ordering_holds=bool(holds),
        projection_residual=min(res_bottom, res_top),
    )


def nonlocal_ratios(Sigma, mu, n):
    """``2 n mu' Sigma^(1+4 eta) mu / tr(Sigma^(2+4 eta))`` for each eta.

    Values above ``NONLOCAL_RATIO`` indicate the strong-signal regime in
    which eta = -1/2 is expected to give the best power.
    """
    eig = _Eigen(Sigma)
    mu = np.asarray(mu, dtype=float)
    return {eta: 2 * n * eig.quad(mu, 1 + 4 * eta) / eig.trace(2 + 4 * eta) for eta in ETAS}
