"""Data-driven choice of the neighborhood size k.

For each candidate band width the signal-to-noise ratio of the test is
estimated by plugging sample moments into its numerator and denominator.
Stability selection repeats the maximisation on ``H`` leave-one-part-out
subsamples and reports the median of the per-fold maximisers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NumericalError, as_data_matrix
from .precision import estimate_banded_precision, gram

# variance terms at or below this are treated as degenerate
DENOM_FLOOR = 1e-12
DEGENERATE = -np.inf


@dataclass(frozen=True)
class SelectionConfig:
    """Candidate grid, number of subsample parts and RNG seed.

    ``k_grid=None`` means ``{0, ..., floor(n / 10)}`` for the sample at hand.
    """

    k_grid: tuple | None = None
    H: int = 5
    seed: int = 0

    def grid_for(self, n):
        if self.k_grid is None:
            return tuple(range(0, n // 10 + 1))
        return tuple(sorted(int(k) for k in self.k_grid))


@dataclass
class SelectionResult:
    chosen_k: int
    per_fold_k: list
    per_k_snr: np.ndarray
    k_grid: tuple = field(default_factory=tuple)
    folds: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "chosen_k": self.chosen_k,
            "per_fold_k": list(self.per_fold_k),
            "k_grid": list(self.k_grid),
            "per_k_snr": [[float(v) for v in row] for row in self.per_k_snr],
        }


def snr_from_gram(G, p):
    """SNR estimate given the Gram matrix ``G_ij = X_i' Omega X_j``."""
    n = G.shape[0]
    if n < 4:
        raise ValueError(f"SNR estimate needs n >= 4, got n={n}")
    G0 = G - np.diag(np.diag(G))
    off_sq = np.sum(G0**2)
    off_sum = np.sum(G0)
    # Xbar' Omega X_i is the i-th row mean of G
    g = G.mean(axis=1)
    gbar = g.mean()
    ghat = np.mean((g - gbar) ** 2) - off_sum**2 / n**4
    numer = n * gbar - p
    var = 2.0 * off_sq / n**2 + 4.0 * n * ghat
    if not np.isfinite(var):
        raise NumericalError(f"SNR variance term is not finite ({var})")
    if var <= DENOM_FLOOR:
        return DEGENERATE
    out = numer / np.sqrt(var)
    if not np.isfinite(out):
        raise NumericalError(f"SNR estimate is not finite (numerator {numer})")
    return float(out)


def snr_estimate(X, k):
    """Plug-in estimate of the test's signal-to-noise ratio at band width k.

    Returns ``-inf`` when the estimated variance term is degenerate so that
    such a ``k`` never wins a maximisation.
    """
    X = as_data_matrix(X, min_rows=4)
    bp = estimate_banded_precision(X, k)
    return snr_from_gram(gram(X, bp), X.shape[1])


def fold_indices(n, H, seed):
    """Seeded partition of ``range(n)`` into ``H`` near-equal parts.

    The indices are shuffled with ``numpy.random.default_rng(seed).permutation``
    (a Fisher-Yates shuffle) and cut into contiguous blocks; the first
    ``n % H`` parts get one extra index.
    """
    if not 2 <= H <= n:
        raise ValueError(f"H must satisfy 2 <= H <= n, got H={H}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, H)]


def lower_median(values):
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def stability_select(X, cfg=None, folds=None):
    """Pick k by leave-one-part-out SNR maximisation.

    Parameters
    ----------
    X : (n, p) array_like
    cfg : SelectionConfig, optional
    folds : list of index arrays, optional
        Explicit partition of the rows; overrides the seeded one.

    Returns
    -------
    SelectionResult
        ``chosen_k`` is the (lower) median of the per-fold maximisers.
        Ties in the maximisation go to the smallest k.
    """
    X = as_data_matrix(X, min_rows=4)
    cfg = cfg or SelectionConfig()
    n, p = X.shape
    grid = cfg.grid_for(n)
    if not grid or grid[0] < 0:
        raise ValueError("k_grid must contain non-negative integers")
    if folds is None:
        folds = fold_indices(n, cfg.H, cfg.seed)
    kmax = max(grid)
    smallest = n - max(len(f) for f in folds)
    if smallest < kmax + 3:
        raise ValueError(
            f"subsample of size {smallest} is too small for k={kmax}; "
            f"need at least {kmax + 3} samples after dropping a part"
        )

    snr = np.empty((len(folds), len(grid)))
    keep = np.ones(n, dtype=bool)
    for h, part in enumerate(folds):
        keep[:] = True
        keep[part] = False
        Xh = X[keep]
        for j, k in enumerate(grid):
            bp = estimate_banded_precision(Xh, k)
            snr[h, j] = snr_from_gram(gram(Xh, bp), p)
    per_fold = [int(grid[int(np.argmax(row))]) for row in snr]
    return SelectionResult(
        chosen_k=int(lower_median(per_fold)),
        per_fold_k=per_fold,
        per_k_snr=snr,
        k_grid=grid,
        folds=list(folds),
    )
