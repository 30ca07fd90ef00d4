"""Monte Carlo harness: data generation, missing-entry planting, study runs.

Three simulation designs are built in, all driven by scalar latents
alpha_i ~ U[0,1] per unit and varpi_l ~ U[0,1] per feature:

* ``gaussian-bump``        eta = exp(-10 (alpha - varpi)^2) / (0.1 sqrt(2 pi)),
                           observed with Gaussian noise (sd 0.5)
* ``laplace-kernel``       eta = exp(-10 |alpha - varpi|),
                           observed with Gaussian noise (sd 0.5)
* ``logistic-bernoulli``   eta = 1 - 1 / (1 + exp(15 (0.8 |alpha - varpi|)^0.8 - 0.1)),
                           observed as Bernoulli(eta)

Replication r of a study draws from an independent stream seeded by the
pair (seed, r), so results do not depend on replication order and runs are
bitwise reproducible. Each replication plants three missing cells in the
last feature row (at the units nearest the 0.1/0.5/0.9 quantiles of alpha),
fits the local-PCA pipeline and the global-PCA baseline on the zero-filled
matrix, and records the maximum absolute error against the true means over
the PCA-split rows plus the prediction errors at the planted cells.
"""

import math

import numpy as np

from .data import DataMatrix, row_split
from .distances import as_distance, pairwise_distances
from .exceptions import ConfigError, NumericalError
from .gpca import fit_gpca
from .localpca import RatioFactors, fit_all, reconstruct
from .matching import match_all

MODELS = ("gaussian-bump", "laplace-kernel", "logistic-bernoulli")
MODEL_BY_NUMBER = {1: "gaussian-bump", 2: "laplace-kernel", 3: "logistic-bernoulli"}

QUANTILE_LEVELS = (0.1, 0.5, 0.9)


def latent_mean(model, alpha, varpi):
    """True mean surface eta_l(alpha_i) as a (p, n) matrix."""
    a = np.asarray(alpha, dtype=float)[None, :]
    v = np.asarray(varpi, dtype=float)[:, None]
    if model == "gaussian-bump":
        return np.exp(-10.0 * (a - v) ** 2) / (0.1 * math.sqrt(2.0 * math.pi))
    if model == "laplace-kernel":
        return np.exp(-10.0 * np.abs(a - v))
    if model == "logistic-bernoulli":
        return 1.0 - 1.0 / (1.0 + np.exp(15.0 * (0.8 * np.abs(a - v)) ** 0.8 - 0.1))
    raise ConfigError(f"unknown simulation model {model!r}; expected one of {MODELS}")


def generate_panel(model, n_units, n_features, seed, noise_sd=0.5):
    """Draw one simulated panel.

    Returns (DataMatrix, alpha, varpi, means). Gaussian designs observe
    means + N(0, noise_sd^2); the Bernoulli design observes 0/1 draws with
    the means as success probabilities (noise_sd is ignored there).
    Deterministic given the seed.
    """
    if n_units < 2 or n_features < 2:
        raise ConfigError("need at least 2 units and 2 features")
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(size=n_units)
    varpi = rng.uniform(size=n_features)
    means = latent_mean(model, alpha, varpi)
    if model == "logistic-bernoulli":
        if means.min() < 0.0 or means.max() > 1.0:
            raise NumericalError(
                "Bernoulli means left [0, 1]; this indicates an internal bug"
            )
        values = (rng.uniform(size=means.shape) < means).astype(float)
    else:
        values = means + noise_sd * rng.standard_normal(means.shape)
    return DataMatrix(values), alpha, varpi, means


def plant_missing(matrix, alpha, levels=QUANTILE_LEVELS):
    """Blank the last feature row at units near the alpha quantiles.

    For each level the selected unit is the one whose alpha lies nearest
    the interpolated (linear, numpy-default) sample quantile, lower index
    on ties. The chosen cells in the last row are zeroed and masked.
    Returns (DataMatrix, selected unit indices).
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size != matrix.n_units:
        raise ValueError("alpha length must equal the number of units")
    if matrix.n_units < 10:
        raise ValueError("planting quantile cells needs at least 10 units")
    targets = np.quantile(alpha, levels)
    units = np.array([int(np.argmin(np.abs(alpha - t))) for t in targets])
    values = np.array(matrix.values)
    mask = np.array(matrix.mask)
    values[-1, units] = 0.0
    mask[-1, units] = False
    return DataMatrix(values, mask), units


class SimConfig:
    """Settings for one Monte Carlo study.

    The number of nearest neighbors is K = round(k_scale * n^(2/3)), which
    must land in [2, n]. ``split_fraction`` is the share of feature rows
    used for matching; the split is contiguous with matching rows first, so
    the last row (where cells are planted missing) always falls in the PCA
    block.
    """

    def __init__(
        self,
        model,
        n_units,
        n_features,
        reps,
        k_scale=1.0,
        seed=0,
        distance="pseudo-max",
        split_fraction=0.5,
        rule=None,
    ):
        if model not in MODELS:
            raise ConfigError(f"unknown model {model!r}; expected one of {MODELS}")
        self.model = model
        self.n_units = int(n_units)
        self.n_features = int(n_features)
        self.reps = int(reps)
        self.k_scale = float(k_scale)
        self.seed = int(seed)
        self.distance = as_distance(distance)
        self.split_fraction = float(split_fraction)
        self.rule = RatioFactors() if rule is None else rule
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must lie strictly between 0 and 1")
        k = self.n_neighbors
        if not 2 <= k <= self.n_units:
            raise ConfigError(
                f"K = round(k_scale * n^(2/3)) = {k} must lie in [2, n={self.n_units}]"
            )

    @property
    def n_neighbors(self):
        return int(round(self.k_scale * self.n_units ** (2.0 / 3.0)))


class MethodMetrics:
    """Aggregated metrics for one method."""

    def __init__(self, mae, pred_err):
        self.mae = float(mae)
        self.pred_err = np.asarray(pred_err, dtype=float)
        self.pred_err.setflags(write=False)

    def __repr__(self):
        return f"MethodMetrics(mae={self.mae:.6g}, pred_err={self.pred_err})"


class SimResult:
    """Study output: per-method means plus the per-replication records."""

    def __init__(self, lpca, gpca, mae_reps, pred_err_reps):
        self.lpca = lpca
        self.gpca = gpca
        self.mae_reps = np.asarray(mae_reps, dtype=float)
        self.pred_err_reps = np.asarray(pred_err_reps, dtype=float)
        self.mae_reps.setflags(write=False)
        self.pred_err_reps.setflags(write=False)

    @property
    def reps(self):
        return self.mae_reps.shape[0]

    def __repr__(self):
        return (
            f"SimResult(reps={self.reps}, lpca_mae={self.lpca.mae:.6g}, "
            f"gpca_mae={self.gpca.mae:.6g})"
        )


def replication_seed(seed, rep):
    """Seed stream for replication ``rep`` of a study seeded with ``seed``."""
    return np.random.SeedSequence((seed, rep))


def run_study(config, noise_sd=0.5, kmax=8):
    """Run a full Monte Carlo study and aggregate metrics across reps.

    For each replication: generate a panel, plant the three quantile cells
    missing, fit the local pipeline (split, match, fit, reconstruct) and
    the global baseline on the zero-filled matrix, then record the maximum
    absolute error against the true means over the PCA rows and the
    absolute prediction errors at the planted cells. Metrics are averaged
    across replications; per-replication records are kept on the result.
    A failing replication aborts the study with its seed pair.
    """
    k = config.n_neighbors
    split = row_split(
        config.n_features,
        (config.split_fraction, 1.0 - config.split_fraction),
        mode="contiguous",
    )
    last_row = config.n_features - 1
    if last_row not in split.rows_pca:
        raise ConfigError("the last feature row must fall in the PCA block")
    last_pos = int(np.flatnonzero(split.rows_pca == last_row)[0])

    mae_reps = np.empty((config.reps, 2))
    pred_err_reps = np.empty((config.reps, 2, len(QUANTILE_LEVELS)))
    for rep in range(config.reps):
        try:
            panel, alpha, _, means = generate_panel(
                config.model,
                config.n_units,
                config.n_features,
                replication_seed(config.seed, rep),
                noise_sd=noise_sd,
            )
            planted, units = plant_missing(panel, alpha)
            x = planted.zero_filled()

            dist = pairwise_distances(x.values[split.rows_match], config.distance)
            neighbors = match_all(dist, k)
            models = fit_all(x.values[split.rows_pca], neighbors, config.rule)
            local_fit = reconstruct(models, neighbors)
            global_fit = fit_gpca(x, kmax=kmax).fitted

            truth = means[split.rows_pca]
            mae_reps[rep, 0] = np.abs(local_fit - truth).max()
            mae_reps[rep, 1] = np.abs(global_fit[split.rows_pca] - truth).max()
            true_cells = means[last_row, units]
            pred_err_reps[rep, 0] = np.abs(local_fit[last_pos, units] - true_cells)
            pred_err_reps[rep, 1] = np.abs(global_fit[last_row, units] - true_cells)
        except Exception as exc:
            raise RuntimeError(
                f"replication {rep} failed (seed pair ({config.seed}, {rep})): {exc}"
            ) from exc

    return SimResult(
        MethodMetrics(mae_reps[:, 0].mean(), pred_err_reps[:, 0].mean(axis=0)),
        MethodMetrics(mae_reps[:, 1].mean(), pred_err_reps[:, 1].mean(axis=0)),
        mae_reps,
        pred_err_reps,
    )
