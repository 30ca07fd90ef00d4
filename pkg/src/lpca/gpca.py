"""Global-PCA comparator: eigenvalue-ratio factor count, then full-matrix PCA.

The factor count is selected on doubly demeaned data via the eigenvalue
ratio statistic; the mean prediction is then formed from principal
components of the raw matrix, so the fitted matrix is its best rank-r
Frobenius approximation.
"""

import numpy as np

from .data import DataMatrix, double_demean
from .exceptions import ConfigError
from .localpca import _gram_spectrum, local_pca


class GlobalFactorModel:
    """Whole-matrix PCA fit: factor count, factors, loadings, fitted means."""

    def __init__(self, n_factors, factors, loadings, fitted):
        self.n_factors = int(n_factors)
        self.factors = factors
        self.loadings = loadings
        self.fitted = fitted
        for a in (self.factors, self.loadings, self.fitted):
            a.setflags(write=False)

    def __repr__(self):
        return f"GlobalFactorModel(n_factors={self.n_factors}, shape={self.fitted.shape})"


def eigenvalue_ratio_select(eigenvalues, kmax):
    """Factor count maximizing the ratio of consecutive eigenvalues.

    Returns argmax over k in {1, ..., kmax} of eig[k] / eig[k+1] (1-based),
    first maximum on ties. A zero denominator under a positive numerator
    counts as an infinite ratio; a zero-over-zero tail is neutral.
    """
    e = np.asarray(eigenvalues, dtype=float)
    kmax = int(kmax)
    if kmax < 1:
        raise ConfigError(f"kmax must be >= 1, got {kmax}")
    if e.size < kmax + 1:
        raise ConfigError(
            f"need at least kmax+1 = {kmax + 1} eigenvalues, got {e.size}"
        )
    if e.size and e[0] > 0:
        e = np.where(np.abs(e) < 1e-12 * e[0], 0.0, e)
    if np.any(e < 0):
        raise ValueError("eigenvalues must be non-negative")
    if np.any(np.diff(e) > 1e-12 * max(e[0], 1.0)):
        raise ValueError("eigenvalues must be sorted in descending order")

    num = e[:kmax]
    den = e[1 : kmax + 1]
    ratios = np.ones(kmax)
    positive = den > 0
    ratios[positive] = num[positive] / den[positive]
    ratios[(~positive) & (num > 0)] = np.inf
    return int(np.argmax(ratios)) + 1


def fit_gpca(matrix, kmax=8):
    """Fit the global-PCA baseline to a complete panel.

    The eigenvalue-ratio statistic runs on the spectrum of the doubly
    demeaned matrix; the selected number of principal components is then
    extracted from the raw matrix to form the fitted means. Callers with
    missing entries zero-fill first (DataMatrix.zero_filled).
    """
    if isinstance(matrix, DataMatrix):
        if not matrix.is_complete:
            raise ValueError(
                "fit_gpca requires a complete matrix; zero-fill missing entries first"
            )
        x = matrix.values
    else:
        x = np.asarray(matrix, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a features x units matrix")

    demeaned_spectrum = _gram_spectrum(double_demean(x))
    r = eigenvalue_ratio_select(demeaned_spectrum, kmax)
    factors, loadings, _, _ = local_pca(x, r)
    return GlobalFactorModel(r, factors, loadings, factors @ loadings.T)
