"""Two-sample test by reduction to a one-sample problem.

With ``n1 <= n2``::

    Y_i = X1_i - sqrt(n1/n2) X2_i + (n1 n2)^{-1/2} sum_{j<=n1} X2_j - mean(X2),   i = 1..n1

The ``Y_i`` are i.i.d. with mean ``mu1 - mu2`` and covariance
``Sigma1 + (n1/n2) Sigma2``, and ``mean(Y) == mean(X1) - mean(X2)``.
Only the first ``n1`` rows of the larger sample enter the pairing, in input
order; shuffle beforehand if a random pairing is wanted.
"""

from __future__ import annotations

import numpy as np

from .core import as_data_matrix
from .ksel import SelectionConfig, stability_select
from .natest import TestReport, check_k_guard, run_test


def transform(X1, X2):
    """Return ``(Y, swapped)``; the samples are swapped first when n1 > n2."""
    X1 = as_data_matrix(X1, min_rows=1)
    X2 = as_data_matrix(X2, min_rows=1)
    if X1.shape[1] != X2.shape[1]:
        raise ValueError(f"samples have different dimensions: {X1.shape[1]} vs {X2.shape[1]}")
    swapped = X1.shape[0] > X2.shape[0]
    if swapped:
        X1, X2 = X2, X1
    n1, n2 = X1.shape[0], X2.shape[0]
    head = X2[:n1]
    Y = X1 - np.sqrt(n1 / n2) * head + head.sum(axis=0) / np.sqrt(n1 * n2) - X2.mean(axis=0)
    return Y, swapped


def run_two_sample_test(X1, X2, k="auto", alpha=0.05, cfg=None, force_k=False):
    """Test ``H0: mu1 == mu2``.

    ``k="auto"`` runs stability selection on the transformed sample first.
    The returned report's ``extras`` record ``n1``, ``n2``, whether the
    inputs were swapped, and the selection diagnostics if any.
    """
    Y, swapped = transform(X1, X2)
    n1 = Y.shape[0]
    n2 = np.shape(X1)[0] if swapped else np.shape(X2)[0]
    extras = {"n1": n1, "n2": int(n2), "swapped": swapped, "effective_n": n1}
    if not np.any(Y):
        # identical inputs with n1 == n2: statistic 0 against centering p with
        # zero spread, i.e. the z -> -inf limit
        if k != "auto":
            check_k_guard(int(k), n1, force_k)
        p = Y.shape[1]
        extras["degenerate"] = "transformed sample is identically zero"
        return TestReport(0.0, float(p), 0.0, -np.inf, 1.0, 0 if k == "auto" else int(k),
                          float(alpha), False, n1, p, extras)
    selection = None
    if k == "auto":
        selection = stability_select(Y, cfg or SelectionConfig())
        k = selection.chosen_k
        force_k = True
    report = run_test(Y, int(k), alpha, force_k=force_k)
    report.extras.update(extras)
    if selection is not None:
        report.extras["selection"] = selection.to_dict()
    return report
