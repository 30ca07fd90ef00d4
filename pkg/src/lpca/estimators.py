"""Scikit-learn style estimator wrappers around the functional pipelines.

All estimators follow the usual conventions: hyperparameters are stored
verbatim in ``__init__`` (so ``get_params``/``set_params``/``clone`` work),
inputs are validated in ``fit``, and learned quantities carry a trailing
underscore. Panels are oriented features x units, matching the rest of the
package; inputs may be plain arrays (fully observed) or DataMatrix
instances, whose missing cells are zero-filled before fitting.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .covadjust import fit_covariate_adjusted
from .data import DataMatrix, row_split
from .distances import as_distance, pairwise_distances
from .exceptions import ConfigError
from .gpca import fit_gpca
from .localpca import FixedFactors, RatioFactors, fit_all, reconstruct
from .matching import match_all
from .synthctl import TreatmentDesign, estimate_synthetic_control


def _as_data_matrix(x, mask=None):
    if isinstance(x, DataMatrix):
        if mask is not None:
            raise ValueError("pass the mask inside the DataMatrix, not separately")
        return x
    return DataMatrix(np.asarray(x, dtype=float), mask)


def _resolve_rule(n_factors, max_factors, ratio_threshold):
    if n_factors is None:
        return RatioFactors(max_factors=max_factors, threshold=ratio_threshold)
    return FixedFactors(n_factors)


def _resolve_k(n_neighbors, neighbor_scale, n_units):
    k = (
        int(n_neighbors)
        if n_neighbors is not None
        else int(round(neighbor_scale * n_units ** (2.0 / 3.0)))
    )
    if not 1 <= k <= n_units:
        raise ConfigError(f"K={k} must lie in [1, n={n_units}]")
    return k


class LocalPCA(BaseEstimator):
    """Nearest-neighbor local principal components estimator.

    Estimates the latent mean surface of a panel whose columns are driven
    by low-dimensional unit latents through unknown, possibly nonlinear
    feature maps. Feature rows are split in two: one block matches each
    unit to its K nearest neighbors, the other supplies the per-
    neighborhood principal components whose rank-d product reconstructs
    the unit's mean column.

    Parameters
    ----------
    n_neighbors : int or None
        Neighborhood size K. ``None`` uses round(neighbor_scale * n^(2/3)).
    neighbor_scale : float
        Scale c in the default K rule.
    distance : str or Distance
        "euclidean", "pseudo-max", "average" or a weighted Distance.
    n_factors : int or None
        Fixed per-neighborhood factor count; ``None`` selects 1 or up to
        ``max_factors`` factors from singular-value ratios.
    max_factors : int
        Cap for the ratio-based factor count.
    ratio_threshold : float or None
        Ratio cutoff; ``None`` uses log(log(K)).
    split_fraction : float
        Share of feature rows used for matching.
    split_mode : str
        "contiguous" (first rows match) or "random" (seeded permutation).
    random_state : int or None
        Seed for the random split mode.

    Attributes
    ----------
    split_ : RowSplit
    k_ : int
    neighbors_ : list of NeighborSet
    models_ : list of LocalFactorModel
    fitted_means_ : ndarray of shape (n_pca_rows, n_units)
    n_factors_ : ndarray of per-unit factor counts
    """

    def __init__(
        self,
        n_neighbors=None,
        neighbor_scale=1.0,
        distance="pseudo-max",
        n_factors=None,
        max_factors=2,
        ratio_threshold=None,
        split_fraction=0.5,
        split_mode="contiguous",
        random_state=None,
    ):
        self.n_neighbors = n_neighbors
        self.neighbor_scale = neighbor_scale
        self.distance = distance
        self.n_factors = n_factors
        self.max_factors = max_factors
        self.ratio_threshold = ratio_threshold
        self.split_fraction = split_fraction
        self.split_mode = split_mode
        self.random_state = random_state

    def fit(self, X, mask=None):
        dm = _as_data_matrix(X, mask).zero_filled()
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must lie strictly between 0 and 1")
        self.split_ = row_split(
            dm.n_features,
            (self.split_fraction, 1.0 - self.split_fraction),
            mode=self.split_mode,
            seed=self.random_state,
        )
        self.k_ = _resolve_k(self.n_neighbors, self.neighbor_scale, dm.n_units)
        rule = _resolve_rule(self.n_factors, self.max_factors, self.ratio_threshold)
        distance = as_distance(self.distance)

        dist = pairwise_distances(dm.values[self.split_.rows_match], distance)
        self.neighbors_ = match_all(dist, self.k_)
        self.models_ = fit_all(dm.values[self.split_.rows_pca], self.neighbors_, rule)
        self.fitted_means_ = reconstruct(self.models_, self.neighbors_)
        self.n_factors_ = np.array([m.n_factors for m in self.models_])
        return self

    def fitted(self):
        """Fitted mean matrix on the PCA rows (n_pca_rows x n_units)."""
        check_is_fitted(self, "fitted_means_")
        return self.fitted_means_


class GlobalPCA(BaseEstimator):
    """Whole-matrix PCA baseline with eigenvalue-ratio factor selection.

    The factor count maximizes the ratio of consecutive eigenvalues of the
    doubly demeaned matrix; principal components of the raw matrix then
    form the fitted means.

    Attributes
    ----------
    n_factors_ : int
    factors_, loadings_, fitted_ : ndarray
    """

    def __init__(self, max_factors=8):
        self.max_factors = max_factors

    def fit(self, X, mask=None):
        dm = _as_data_matrix(X, mask).zero_filled()
        model = fit_gpca(dm, kmax=self.max_factors)
        self.n_factors_ = model.n_factors
        self.factors_ = model.factors
        self.loadings_ = model.loadings
        self.fitted_ = model.fitted
        return self

    def fitted(self):
        """Fitted mean matrix (n_features x n_units)."""
        check_is_fitted(self, "fitted_")
        return self.fitted_


class CovariateAdjustedLocalPCA(BaseEstimator):
    """Local PCA for panels with observed high-rank regressors.

    Residualizes the outcome and each regressor panel through the local
    pipeline, estimates the regressor slopes by pooled least squares on
    the residuals, and refits the local model on the slope-adjusted
    outcome using a three-way row split.

    Attributes
    ----------
    theta_ : ndarray of shape (q,)
    gram_ : ndarray of shape (q, q)
    split_ : RowSplit
    neighbors_, models_ : final-step matching and local models
    fitted_means_ : ndarray on the final row block
    """

    def __init__(
        self,
        n_neighbors=None,
        neighbor_scale=1.0,
        distance="pseudo-max",
        n_factors=None,
        max_factors=2,
        ratio_threshold=None,
        split_fractions=(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        split_mode="contiguous",
        random_state=None,
    ):
        self.n_neighbors = n_neighbors
        self.neighbor_scale = neighbor_scale
        self.distance = distance
        self.n_factors = n_factors
        self.max_factors = max_factors
        self.ratio_threshold = ratio_threshold
        self.split_fractions = split_fractions
        self.split_mode = split_mode
        self.random_state = random_state

    def fit(self, X, covariates):
        dm = _as_data_matrix(X)
        if len(self.split_fractions) != 3:
            raise ConfigError("split_fractions must have length 3")
        self.split_ = row_split(
            dm.n_features,
            self.split_fractions,
            mode=self.split_mode,
            seed=self.random_state,
        )
        self.k_ = _resolve_k(self.n_neighbors, self.neighbor_scale, dm.n_units)
        rule = _resolve_rule(self.n_factors, self.max_factors, self.ratio_threshold)
        slopes, neighbors, models = fit_covariate_adjusted(
            dm, covariates, self.split_, self.k_, as_distance(self.distance), rule
        )
        self.theta_ = slopes.theta
        self.gram_ = slopes.gram
        self.neighbors_ = neighbors
        self.models_ = models
        self.fitted_means_ = reconstruct(models, neighbors)
        self.n_factors_ = np.array([m.n_factors for m in models])
        return self

    def fitted(self):
        """Fitted adjusted-outcome means on the final row block."""
        check_is_fitted(self, "fitted_means_")
        return self.fitted_means_


class SyntheticControl(BaseEstimator):
    """Counterfactual prediction for a single treated unit.

    Masks the treated unit's post-treatment outcomes, runs the local-PCA
    pipeline on the perturbed panel and reads the treated unit's
    reconstructed post-treatment column as the counterfactual.

    Parameters
    ----------
    treated : int
        0-based column of the treated unit.
    n_pre : int
        Number of pre-treatment feature rows.
    level_mode : str
        "additive" or "multiplicative" translation of growth to levels.
    initial_level : float or None
        Starting level for the optional level path.
    (remaining parameters as in LocalPCA)

    Attributes
    ----------
    result_ : SynthResult
    counterfactual_, observed_, effects_ : ndarray per post period
    avg_effect_ : float
    level_path_ : ndarray or None
    """

    def __init__(
        self,
        treated=0,
        n_pre=1,
        n_neighbors=None,
        neighbor_scale=1.0,
        distance="pseudo-max",
        n_factors=None,
        max_factors=2,
        ratio_threshold=None,
        split_fraction=0.5,
        split_mode="contiguous",
        random_state=None,
        level_mode="additive",
        initial_level=None,
    ):
        self.treated = treated
        self.n_pre = n_pre
        self.n_neighbors = n_neighbors
        self.neighbor_scale = neighbor_scale
        self.distance = distance
        self.n_factors = n_factors
        self.max_factors = max_factors
        self.ratio_threshold = ratio_threshold
        self.split_fraction = split_fraction
        self.split_mode = split_mode
        self.random_state = random_state
        self.level_mode = level_mode
        self.initial_level = initial_level

    def fit(self, Y, mask=None):
        dm = _as_data_matrix(Y, mask)
        design = TreatmentDesign(self.treated, self.n_pre)
        self.split_ = row_split(
            dm.n_features,
            (self.split_fraction, 1.0 - self.split_fraction),
            mode=self.split_mode,
            seed=self.random_state,
        )
        self.k_ = _resolve_k(self.n_neighbors, self.neighbor_scale, dm.n_units)
        rule = _resolve_rule(self.n_factors, self.max_factors, self.ratio_threshold)
        result = estimate_synthetic_control(
            dm,
            design,
            self.split_,
            self.k_,
            as_distance(self.distance),
            rule,
            level_mode=self.level_mode,
            initial_level=self.initial_level,
        )
        self.result_ = result
        self.counterfactual_ = result.counterfactual
        self.observed_ = result.observed
        self.effects_ = result.effects
        self.avg_effect_ = result.avg_effect
        self.level_path_ = result.level_path
        self.neighbors_ = result.neighbors
        self.models_ = result.models
        self.fitted_means_ = result.fitted_means
        return self

    def effects(self):
        """Per-period observed-minus-counterfactual effects."""
        check_is_fitted(self, "effects_")
        return self.effects_
