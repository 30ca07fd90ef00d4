"""Covariate-adjusted pipeline for panels with observed high-rank regressors.

Model: the outcome panel equals a linear combination of q regressor panels
plus an unspecified nonlinear factor structure plus noise. The slope vector
is estimated by partialling out the factor structure from both sides:

(a) split the feature rows into three portions,
(b) on the (match, pca) portions, run the local-PCA pipeline on each
    regressor panel and keep the residuals,
(c) do the same for the outcome panel,
(d) regress the outcome residuals on the regressor residuals, pooling over
    all cells: theta = G^{-1} sum_{i,t} e_it * u_it with the q x q Gram
    G = sum_{i,t} e_it e_it',
(e) subtract the fitted linear part from the outcome and rerun the
    local-PCA pipeline on the adjusted panel, matching on the second
    portion and extracting components on the third.

Identification requires the regressors to carry high-rank variation; a
Gram condition number above 1e12 is treated as failure.

The q+1 residualization passes are mutually independent; the slope solve
is a single deterministic reduction.
"""

import numpy as np

from .data import DataMatrix
from .distances import pairwise_distances
from .exceptions import ConfigError, NumericalError
from .localpca import fit_all, reconstruct
from .matching import match_all

_MAX_GRAM_CONDITION = 1e12


class SlopeEstimate:
    """Estimated regressor slopes plus the Gram matrix used in the solve."""

    def __init__(self, theta, gram):
        self.theta = np.asarray(theta, dtype=float)
        self.gram = np.asarray(gram, dtype=float)
        self.theta.setflags(write=False)
        self.gram.setflags(write=False)

    def __repr__(self):
        return f"SlopeEstimate(theta={np.array2string(self.theta, precision=4)})"


def residualize(panel, rows_match, rows_pca, k, distance, rule):
    """Observed-minus-fitted residuals of one panel on the PCA rows.

    Matches units on ``rows_match`` of ``panel``, fits local factor models
    on ``rows_pca`` and returns panel[rows_pca] - fitted.
    """
    panel = np.asarray(panel, dtype=float)
    if panel.ndim != 2:
        raise ValueError("panel must be 2-D")
    rows_match = np.asarray(rows_match, dtype=int)
    rows_pca = np.asarray(rows_pca, dtype=int)
    for rows in (rows_match, rows_pca):
        if rows.size == 0 or rows.min() < 0 or rows.max() >= panel.shape[0]:
            raise ValueError("split rows out of range for panel")
    dist = pairwise_distances(panel[rows_match], distance)
    neighbors = match_all(dist, k)
    models = fit_all(panel[rows_pca], neighbors, rule)
    return panel[rows_pca] - reconstruct(models, neighbors)


def estimate_slopes(regressor_residuals, outcome_residuals):
    """Pooled least-squares slopes of outcome residuals on regressor residuals.

    All residual matrices share one shape; every cell contributes one
    observation. Equivalent to ordinary least squares on the stacked
    (cells x q) design.
    """
    e_hats = [np.asarray(e, dtype=float) for e in regressor_residuals]
    u_hat = np.asarray(outcome_residuals, dtype=float)
    if not e_hats:
        raise ConfigError("no regressor residuals supplied")
    for e in e_hats:
        if e.shape != u_hat.shape:
            raise ValueError("all residual matrices must share one shape")

    scale = u_hat.size
    stacked = np.stack([e.ravel() for e in e_hats])
    gram = stacked @ stacked.T / scale
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > _MAX_GRAM_CONDITION:
        raise NumericalError(
            "covariates too collinear with factor structure "
            f"(Gram condition number {cond:.3g})"
        )
    rhs = stacked @ u_hat.ravel() / scale
    return SlopeEstimate(np.linalg.solve(gram, rhs), gram)


def fit_covariate_adjusted(matrix, covariates, split, k, distance, rule):
    """Run the full covariate-adjusted pipeline.

    Parameters
    ----------
    matrix : DataMatrix or ndarray
        Complete outcome panel (features x units).
    covariates : sequence of ndarray
        One panel per regressor, same shape as the outcome.
    split : RowSplit
        Three-way split; residualization uses (match, pca), the final fit
        matches on pca and extracts components on the final portion.
    k, distance, rule
        Matching and factor-count settings, shared by all passes.

    Returns
    -------
    (SlopeEstimate, neighbors, models) from the final adjusted fit.
    """
    if isinstance(matrix, DataMatrix):
        if not matrix.is_complete:
            raise ValueError("covariate adjustment requires a complete outcome panel")
        x = matrix.values
    else:
        x = np.asarray(matrix, dtype=float)
    covariates = [np.asarray(w, dtype=float) for w in covariates]
    if len(covariates) == 0:
        raise ConfigError("no covariates supplied; use the plain local-PCA pipeline")
    for w in covariates:
        if w.shape != x.shape:
            raise ValueError(
                f"covariate shape {w.shape} does not match outcome shape {x.shape}"
            )
    if not split.is_three_way:
        raise ConfigError("covariate adjustment needs a three-way row split")
    if split.n_features != x.shape[0]:
        raise ValueError("split covers a different number of rows than the panel")

    rows_match, rows_pca, rows_final = (
        split.rows_match,
        split.rows_pca,
        split.rows_final,
    )
    e_hats = [
        residualize(w, rows_match, rows_pca, k, distance, rule) for w in covariates
    ]
    u_hat = residualize(x, rows_match, rows_pca, k, distance, rule)
    slopes = estimate_slopes(e_hats, u_hat)

    adjusted = x - sum(t * w for t, w in zip(slopes.theta, covariates))
    dist = pairwise_distances(adjusted[rows_pca], distance)
    neighbors = match_all(dist, k)
    models = fit_all(adjusted[rows_final], neighbors, rule)
    return slopes, neighbors, models
