"""Synthetic-control matrix completion for a single treated unit.

The treated unit's post-treatment outcomes are replaced with zeros (masked),
the local-PCA pipeline runs on the perturbed matrix, and the treated unit's
reconstructed column supplies the counterfactual for the post periods. The
estimator tolerates this perturbation because only a fixed, small number of
cells per row and column are affected; designs with substantial additional
missingness (multiple treated units, staggered adoption) are refused.
"""

import math

import numpy as np

from .data import DataMatrix, mask_to_zero
from .distances import pairwise_distances
from .exceptions import ConfigError
from .localpca import fit_all, reconstruct
from .matching import match_all


class TreatmentDesign:
    """Single treated unit with treatment starting after ``n_pre`` periods.

    ``treated`` is the 0-based unit column; ``n_pre`` counts the
    pre-treatment feature rows, so rows n_pre, ..., p-1 are post-treatment.
    """

    def __init__(self, treated, n_pre):
        self.treated = int(treated)
        self.n_pre = int(n_pre)
        if self.treated < 0:
            raise ConfigError(f"treated unit must be >= 0, got {treated}")
        if self.n_pre < 1:
            raise ConfigError(f"n_pre must be >= 1, got {n_pre}")

    def validate_for(self, shape):
        p, n = shape
        if self.treated >= n:
            raise ConfigError(f"treated unit {self.treated} out of range for n={n}")
        if self.n_pre >= p:
            raise ConfigError(
                f"n_pre={self.n_pre} leaves no post periods for p={p}"
            )

    def post_rows(self, n_features):
        return np.arange(self.n_pre, n_features)

    def __repr__(self):
        return f"TreatmentDesign(treated={self.treated}, n_pre={self.n_pre})"


class SynthResult:
    """Per-period counterfactuals, effects and optional level path."""

    def __init__(self, periods, observed, counterfactual, level_path=None):
        self.periods = np.asarray(periods, dtype=int)
        self.observed = np.asarray(observed, dtype=float)
        self.counterfactual = np.asarray(counterfactual, dtype=float)
        self.effects = self.observed - self.counterfactual
        self.avg_effect = float(np.nanmean(self.effects))
        self.level_path = (
            None if level_path is None else np.asarray(level_path, dtype=float)
        )
        for a in (self.periods, self.observed, self.counterfactual, self.effects):
            a.setflags(write=False)
        if self.level_path is not None:
            self.level_path.setflags(write=False)

    def __repr__(self):
        return (
            f"SynthResult({self.periods.size} post periods, "
            f"avg_effect={self.avg_effect:.6g})"
        )


def mask_treated(matrix, design):
    """Zero out and mask the treated unit's post-treatment cells."""
    design.validate_for(matrix.shape)
    mask = np.array(matrix.mask)
    mask[design.n_pre :, design.treated] = False
    values = np.where(mask, matrix.values, 0.0)
    return DataMatrix(values, mask)


def _check_missingness_guard(mask, design):
    """Refuse patterns with many missing cells beyond the designed block.

    Missing entries other than the treated unit's post-treatment cells must
    not exceed ceil(0.1 * min(p, n)) in any row or column; heavier patterns
    (multiple treated units, staggered adoption) perturb the matrix too
    much for reliable completion.
    """
    extra = ~mask
    extra = extra.copy()
    extra[design.n_pre :, design.treated] = False
    p, n = mask.shape
    limit = math.ceil(0.1 * min(p, n))
    worst = max(
        int(extra.sum(axis=1).max(initial=0)), int(extra.sum(axis=0).max(initial=0))
    )
    if worst > limit:
        raise ConfigError(
            f"too many missing entries outside the treatment design "
            f"({worst} in one row or column, limit {limit}); "
            "multiple treated units or staggered adoption are not supported"
        )


def growth_to_level(initial_level, growth, mode="additive"):
    """Translate a growth-rate path into a level trajectory.

    Additive mode cumulates first differences: L_t = initial + sum_{s<=t} g_s.
    Multiplicative mode compounds rates: L_t = initial * prod_{s<=t} (1+g_s),
    which requires every rate to exceed -1.
    """
    growth = np.asarray(growth, dtype=float)
    if not (np.isfinite(initial_level) and np.all(np.isfinite(growth))):
        raise ValueError("growth_to_level requires finite inputs")
    if mode == "additive":
        return initial_level + np.cumsum(growth)
    if mode == "multiplicative":
        if np.any(growth <= -1):
            raise ValueError("multiplicative mode requires growth > -1 elementwise")
        return initial_level * np.cumprod(1.0 + growth)
    raise ConfigError(f"unknown level mode {mode!r}")


def estimate_synthetic_control(
    matrix,
    design,
    split,
    k,
    distance,
    rule,
    level_mode="additive",
    initial_level=None,
):
    """Predict the treated unit's untreated post-treatment outcomes.

    All post-treatment rows must fall in the PCA block of ``split``: a post
    period in the matching block would feed its zeroed placeholder into the
    distances, which the completion argument does not cover. Effects are
    observed minus counterfactual per period. When ``initial_level`` is
    given, the counterfactual growth path is additionally translated into
    a level trajectory under ``level_mode``.
    """
    design.validate_for(matrix.shape)
    post = design.post_rows(matrix.n_features)
    if np.intersect1d(post, split.rows_match).size:
        raise ConfigError(
            "post-treatment periods must lie in the PCA row split, "
            "not the matching split"
        )
    if np.setdiff1d(post, split.rows_pca).size:
        raise ConfigError("every post-treatment period must lie in the PCA row split")

    masked = mask_treated(matrix, design)
    _check_missingness_guard(masked.mask, design)
    x = mask_to_zero(masked).values

    dist = pairwise_distances(x[split.rows_match], distance)
    neighbors = match_all(dist, k)
    models = fit_all(x[split.rows_pca], neighbors, rule)
    fitted = reconstruct(models, neighbors)

    pca_position = {row: pos for pos, row in enumerate(split.rows_pca)}
    post_positions = np.array([pca_position[row] for row in post])
    counterfactual = fitted[post_positions, design.treated]
    observed = np.where(
        matrix.mask[post, design.treated],
        matrix.values[post, design.treated],
        np.nan,
    )
    level_path = None
    if initial_level is not None:
        level_path = growth_to_level(initial_level, counterfactual, level_mode)
    result = SynthResult(post, observed, counterfactual, level_path)
    result.fitted_means = fitted
    result.neighbors = neighbors
    result.models = models
    return result
