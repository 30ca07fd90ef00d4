import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lpca import (
    ConfigError,
    CovariateAdjustedLocalPCA,
    DataMatrix,
    GlobalPCA,
    LocalPCA,
    SyntheticControl,
)


def rank_one_panel(seed=0, p=40, n=30):
    rng = np.random.default_rng(seed)
    return np.outer(rng.uniform(0.5, 1.5, p), rng.uniform(size=n))


class TestSklearnProtocol:
    @pytest.mark.parametrize("estimator", [
        LocalPCA(), GlobalPCA(), CovariateAdjustedLocalPCA(), SyntheticControl(),
    ])
    def test_get_set_params_roundtrip(self, estimator):
        params = estimator.get_params()
        estimator.set_params(**params)
        assert estimator.get_params() == params

    def test_clone_preserves_params(self):
        est = LocalPCA(n_neighbors=7, distance="average", n_factors=2)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_set_params_chains(self):
        est = LocalPCA().set_params(n_neighbors=5, distance="euclidean")
        assert est.n_neighbors == 5

    def test_unfitted_accessors_raise(self):
        with pytest.raises(NotFittedError):
            LocalPCA().fitted()
        with pytest.raises(NotFittedError):
            GlobalPCA().fitted()
        with pytest.raises(NotFittedError):
            SyntheticControl().effects()


class TestLocalPCAEstimator:
    def test_rank_one_recovery(self):
        x = rank_one_panel()
        est = LocalPCA(n_neighbors=8, n_factors=1, distance="euclidean").fit(x)
        assert np.abs(est.fitted_means_ - x[est.split_.rows_pca]).max() < 1e-8
        assert np.array_equal(est.fitted(), est.fitted_means_)
        assert est.k_ == 8
        assert len(est.neighbors_) == 30
        assert np.all(est.n_factors_ == 1)

    def test_default_k_rule(self):
        est = LocalPCA(n_factors=1, distance="euclidean").fit(rank_one_panel(n=64))
        assert est.k_ == 16

    def test_accepts_data_matrix_with_missing(self):
        x = rank_one_panel()
        mask = np.ones(x.shape, dtype=bool)
        mask[-1, 0] = False
        est = LocalPCA(n_neighbors=6, n_factors=1, distance="euclidean")
        est.fit(DataMatrix(np.where(mask, x, 0.0), mask))
        assert est.fitted_means_.shape == (20, 30)

    def test_random_split_needs_seed(self):
        with pytest.raises(ConfigError):
            LocalPCA(split_mode="random", n_factors=1).fit(rank_one_panel())

    def test_bad_split_fraction(self):
        with pytest.raises(ConfigError):
            LocalPCA(split_fraction=1.0).fit(rank_one_panel())


class TestGlobalPCAEstimator:
    def test_rank_two_selection(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((40, 2)) @ rng.standard_normal((30, 2)).T
        est = GlobalPCA().fit(x)
        assert est.n_factors_ == 2
        assert np.abs(est.fitted_ - x).max() < 1e-8


class TestSyntheticControlEstimator:
    def test_counterfactual_tracks_truth(self):
        # 4 masked cells over 40 PCA rows: completion bias is ~10% here
        # (it shrinks like masked/p_pca; see test_synthctl for the scaling)
        y = rank_one_panel(seed=2, p=80, n=60)
        est = SyntheticControl(treated=3, n_pre=76, n_neighbors=12, n_factors=1,
                               distance="euclidean").fit(y)
        truth = y[76:, 3]
        assert np.abs(est.counterfactual_ - truth).max() / truth.max() < 0.25
        assert np.allclose(est.effects_, est.observed_ - est.counterfactual_)
        assert est.avg_effect_ == pytest.approx(est.effects_.mean())

    def test_level_path_attribute(self):
        y = rank_one_panel(seed=3, p=40, n=30)
        est = SyntheticControl(treated=1, n_pre=37, n_neighbors=8, n_factors=1,
                               distance="euclidean", initial_level=50.0).fit(y)
        assert est.level_path_.shape == (3,)


class TestCovariateAdjustedEstimator:
    def test_scalar_slope(self):
        rng = np.random.default_rng(4)
        p = n = 45
        rho = rng.uniform(size=n)
        psi = rng.uniform(size=p)
        w = np.exp(-3 * np.abs(rho[None, :] - psi[:, None]))
        w = w + 0.5 * rng.standard_normal((p, n))
        est = CovariateAdjustedLocalPCA(n_neighbors=8, n_factors=1,
                                        distance="euclidean").fit(0.7 * w, [w])
        assert abs(est.theta_[0] - 0.7) < 1e-6
        assert est.fitted_means_.shape[0] == est.split_.rows_final.size

    def test_needs_covariates(self):
        with pytest.raises(ConfigError):
            CovariateAdjustedLocalPCA(n_neighbors=5).fit(rank_one_panel(), [])
