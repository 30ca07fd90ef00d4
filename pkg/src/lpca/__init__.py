"""Local principal components for large nonlinear panel factor structure.

Estimates the latent mean surface of a features-x-units panel whose
columns are driven by low-dimensional unit latents through unknown,
possibly nonlinear feature maps. The pipeline matches each unit to its K
nearest neighbors on one block of feature rows and extracts principal
components from the complementary block within each neighborhood; the
per-unit rank-d reconstruction estimates the mean surface uniformly well
even when the full matrix is not low-rank. Also included: a global-PCA
baseline, covariate adjustment for panels with observed high-rank
regressors, synthetic-control matrix completion and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .covadjust import (
    SlopeEstimate,
    estimate_slopes,
    fit_covariate_adjusted,
    residualize,
)
from .data import (
    DataMatrix,
    RowSplit,
    double_demean,
    load_csv,
    load_split,
    mask_to_zero,
    row_split,
    save_csv,
    save_split,
)
from .distances import (
    Distance,
    average_dist,
    euclidean_sq,
    pairwise_distances,
    parse_distance,
    pseudo_max,
    weighted_sq,
)
from .estimators import (
    CovariateAdjustedLocalPCA,
    GlobalPCA,
    LocalPCA,
    SyntheticControl,
)
from .exceptions import ConfigError, DataError, LpcaError, NumericalError
from .gpca import GlobalFactorModel, eigenvalue_ratio_select, fit_gpca
from .localpca import (
    FixedFactors,
    LatentDimension,
    LocalFactorModel,
    RatioFactors,
    estimate_latent_dimension,
    fit_all,
    local_pca,
    reconstruct,
    select_n_factors,
)
from .matching import (
    NeighborSet,
    knn_match,
    match_all,
    matching_discrepancy,
    neighbor_discrepancies,
    save_neighbors,
)
from .simlab import (
    MODEL_BY_NUMBER,
    MODELS,
    MethodMetrics,
    SimConfig,
    SimResult,
    generate_panel,
    latent_mean,
    plant_missing,
    replication_seed,
    run_study,
)
from .synthctl import (
    SynthResult,
    TreatmentDesign,
    estimate_synthetic_control,
    growth_to_level,
    mask_treated,
)

__all__ = [
    "__version__",
    "ConfigError", "DataError", "LpcaError", "NumericalError",
    "DataMatrix", "RowSplit", "load_csv", "save_csv", "row_split",
    "save_split", "load_split", "double_demean", "mask_to_zero",
    "Distance", "euclidean_sq", "average_dist", "weighted_sq", "pseudo_max",
    "pairwise_distances", "parse_distance",
    "NeighborSet", "knn_match", "match_all", "neighbor_discrepancies",
    "matching_discrepancy", "save_neighbors",
    "FixedFactors", "RatioFactors", "select_n_factors", "LocalFactorModel",
    "local_pca", "fit_all", "reconstruct", "LatentDimension",
    "estimate_latent_dimension",
    "GlobalFactorModel", "eigenvalue_ratio_select", "fit_gpca",
    "SlopeEstimate", "residualize", "estimate_slopes", "fit_covariate_adjusted",
    "TreatmentDesign", "SynthResult", "mask_treated",
    "estimate_synthetic_control", "growth_to_level",
    "MODELS", "MODEL_BY_NUMBER", "SimConfig", "SimResult", "MethodMetrics",
    "latent_mean", "generate_panel", "plant_missing", "replication_seed",
    "run_study",
    "LocalPCA", "GlobalPCA", "CovariateAdjustedLocalPCA", "SyntheticControl",
]
