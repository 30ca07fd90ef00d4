import math

import numpy as np
import pytest

from lpca import (
    ConfigError,
    FixedFactors,
    RatioFactors,
    estimate_latent_dimension,
    fit_all,
    knn_match,
    local_pca,
    match_all,
    pairwise_distances,
    reconstruct,
    select_n_factors,
)


def assert_model_invariants(block, factors, loadings, eigenvalues):
    p, k = block.shape
    d = factors.shape[1]
    assert np.allclose(factors.T @ factors / p, np.eye(d), atol=1e-8)
    cross = loadings.T @ loadings / k
    off = cross - np.diag(np.diagonal(cross))
    assert np.abs(off).max() < 1e-8
    assert np.array_equal(loadings, block.T @ factors / p)
    assert np.all(np.diff(eigenvalues) <= 1e-12)
    assert np.all(eigenvalues >= 0)
    for j in range(d):
        col = factors[:, j]
        assert col[np.argmax(np.abs(col))] > 0


class TestLocalPca:
    def test_hand_eigendecomposition(self):
        # gram/(pK) = diag(1, 0.25): top eigenvalue 1, eigenvector e1
        block = np.array([[2.0, 0.0], [0.0, 1.0]])
        factors, loadings, eigenvalues, spectrum = local_pca(block, 1)
        assert eigenvalues[0] == pytest.approx(1.0)
        assert np.allclose(factors[:, 0], [math.sqrt(2.0), 0.0])
        assert np.allclose(loadings[:, 0], [math.sqrt(2.0), 0.0])
        assert np.allclose(factors @ loadings.T, [[2.0, 0.0], [0.0, 0.0]])
        assert np.allclose(spectrum, [1.0, 0.25])

    def test_exact_rank_one_recovery(self):
        rng = np.random.default_rng(0)
        block = np.outer(rng.normal(size=12), rng.normal(size=7))
        factors, loadings, _, _ = local_pca(block, 1)
        assert np.abs(factors @ loadings.T - block).max() < 1e-10

    def test_full_rank_reconstruction(self):
        rng = np.random.default_rng(1)
        for shape in ((6, 9), (9, 6), (5, 5)):
            block = rng.normal(size=shape)
            d = min(shape)
            factors, loadings, _, _ = local_pca(block, d)
            assert np.abs(factors @ loadings.T - block).max() < 1e-8

    def test_invariants_on_random_blocks(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            p = int(rng.integers(3, 15))
            k = int(rng.integers(3, 15))
            block = rng.normal(size=(p, k))
            d = int(rng.integers(1, min(p, k) + 1))
            factors, loadings, eigenvalues, _ = local_pca(block, d)
            assert_model_invariants(block, factors, loadings, eigenvalues)

    def test_duplicate_columns_degenerate_block(self):
        # exact ties keep duplicate columns; rank 1 with d=2 exercises the
        # degenerate-eigenvalue path
        col = np.arange(1.0, 7.0)
        block = np.column_stack([col, col, col])
        factors, loadings, eigenvalues, _ = local_pca(block, 2)
        assert_model_invariants(block, factors, loadings, eigenvalues)
        assert np.abs(factors @ loadings.T - block).max() < 1e-8

    def test_spectral_identity_against_dense_oracle(self):
        # eigenvalues must match an independent full eigendecomposition of
        # the row-side gram
        rng = np.random.default_rng(3)
        for _ in range(20):
            block = rng.normal(size=(20, 20))
            p, k = block.shape
            _, _, eigenvalues, spectrum = local_pca(block, 5)
            oracle = np.linalg.eigvalsh(block @ block.T / (p * k))[::-1]
            assert np.abs(eigenvalues - oracle[:5]).max() < 1e-9
            assert np.abs(spectrum - oracle[: len(spectrum)]).max() < 1e-9

    def test_sign_flip_leaves_product_unchanged(self):
        rng = np.random.default_rng(4)
        block = rng.normal(size=(8, 6))
        factors, loadings, _, _ = local_pca(block, 3)
        product = factors @ loadings.T
        flipped = product.copy()
        for j in range(3):
            f = factors.copy()
            l = loadings.copy()
            f[:, j] *= -1
            l[:, j] *= -1
            assert np.abs(f @ l.T - flipped).max() < 1e-12

    def test_d_out_of_range(self):
        block = np.ones((4, 3))
        with pytest.raises(ConfigError):
            local_pca(block, 4)
        with pytest.raises(ConfigError):
            local_pca(block, 0)


class TestSelectNFactors:
    def test_loglog_rule_selects_two(self):
        # ln(ln(100)) ~ 1.5272; 5/1 = 5 passes
        assert select_n_factors([10.0, 5.0, 1.0], 100, RatioFactors()) == 2

    def test_loglog_rule_selects_one(self):
        # 5/4 = 1.25 < 1.5272
        assert select_n_factors([10.0, 5.0, 4.0], 100, RatioFactors()) == 1

    def test_fixed_ignores_spectrum(self):
        assert select_n_factors([1.0, 1.0, 1.0], 4, FixedFactors(3)) == 3

    def test_zero_denominator_is_infinite_ratio(self):
        assert select_n_factors([10.0, 5.0, 0.0], 100, RatioFactors()) == 2

    def test_too_few_values(self):
        with pytest.raises(ValueError):
            select_n_factors([10.0, 5.0], 100, RatioFactors())

    def test_loglog_needs_16_neighbors(self):
        with pytest.raises(ConfigError):
            select_n_factors([10.0, 5.0, 1.0], 15, RatioFactors())

    def test_generalized_matches_bruteforce(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            m = int(rng.integers(4, 9))
            s = np.sort(rng.uniform(0.0, 10.0, size=m))[::-1]
            d_max = int(rng.integers(1, m))
            tau = float(rng.uniform(1.0, 4.0))
            # independent brute force of the rule text
            expected = 1
            for j in range(1, d_max + 1):
                ratio = np.inf if s[j] == 0 else s[j - 1] / s[j]
                if ratio >= tau:
                    expected = j
            got = select_n_factors(s, 100, RatioFactors(d_max, tau))
            assert got == expected


class TestFitAllReconstruct:
    def test_identical_columns_fixed_one(self):
        col = np.linspace(1.0, 2.0, 6)
        x = np.tile(col[:, None], (1, 5))
        dist = np.zeros((5, 5))
        neighbors = match_all(dist, 3)
        models = fit_all(x, neighbors, FixedFactors(1))
        assert len(models) == 5
        for m in models:
            fitted = m.fitted_block()
            for c in range(fitted.shape[1]):
                assert np.abs(fitted[:, c] - col).max() < 1e-8

    def test_single_unit_boundary(self):
        x = np.array([[1.0], [2.0]])
        neighbors = match_all(np.zeros((1, 1)), 1)
        models = fit_all(x, neighbors, FixedFactors(1))
        assert len(models) == 1
        assert models[0].self_position == 0

    def test_models_satisfy_invariants(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(12, 10))
        dist = pairwise_distances(rng.normal(size=(8, 10)), "euclidean")
        neighbors = match_all(dist, 6)
        models = fit_all(x, neighbors, FixedFactors(2))
        assert len(models) == 10
        for m, ns in zip(models, neighbors):
            block = x[:, ns.indices]
            assert_model_invariants(block, m.factors, m.loadings, m.eigenvalues)
            assert ns.indices[m.self_position] == m.unit

    def test_noiseless_linear_pipeline_recovers_means(self):
        rng = np.random.default_rng(7)
        p = n = 40
        loadings_true = rng.uniform(0.5, 1.5, p)
        alpha = rng.uniform(size=n)
        h = np.outer(loadings_true, alpha)
        match_rows, pca_rows = np.arange(20), np.arange(20, 40)
        dist = pairwise_distances(h[match_rows], "euclidean")
        neighbors = match_all(dist, 8)
        models = fit_all(h[pca_rows], neighbors, FixedFactors(1))
        fitted = reconstruct(models, neighbors)
        assert np.abs(fitted - h[pca_rows]).max() < 1e-8

    def test_full_rank_reconstructs_own_column(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(4, 9))
        dist = pairwise_distances(rng.normal(size=(5, 9)), "euclidean")
        neighbors = match_all(dist, 6)
        models = fit_all(x, neighbors, FixedFactors(4))
        fitted = reconstruct(models, neighbors)
        assert np.abs(fitted - x).max() < 1e-8

    def test_ratio_rule_through_fit_all(self):
        # exact rank-2 blocks with a strong gap select 2 under the log-log rule
        rng = np.random.default_rng(9)
        n, p = 20, 12
        x = np.outer(rng.uniform(1, 2, p), np.ones(n)) + np.outer(
            rng.normal(size=p), rng.normal(size=n)
        )
        neighbors = match_all(np.zeros((n, n)), 16)
        models = fit_all(x, neighbors, RatioFactors())
        for m in models:
            assert m.n_factors == 2


class TestEstimateLatentDimension:
    def _block_with_spectrum(self, eigenvalues, p, k, rng):
        # build a block whose gram/(pK) has exactly these top eigenvalues
        u, _ = np.linalg.qr(rng.normal(size=(p, len(eigenvalues))))
        v, _ = np.linalg.qr(rng.normal(size=(k, len(eigenvalues))))
        s = np.sqrt(np.asarray(eigenvalues) * p * k)
        return u @ np.diag(s) @ v.T

    def test_second_group_of_two(self):
        rng = np.random.default_rng(10)
        n = 6
        block = self._block_with_spectrum([100.0, 9.0, 8.0, 0.1], 15, n, rng)
        neighbors = match_all(np.zeros((n, n)), n)
        est = estimate_latent_dimension(block, neighbors, gap_ratio=10.0)
        assert est.r == 2
        assert not est.inconclusive

    def test_linear_one_factor_with_intercept(self):
        rng = np.random.default_rng(11)
        n, p = 8, 15
        x = 2.0 + np.outer(rng.uniform(0.5, 1.5, p), rng.uniform(size=n) - 0.5)
        neighbors = match_all(np.zeros((n, n)), n)
        est = estimate_latent_dimension(x, neighbors, gap_ratio=5.0)
        assert est.r == 1

    def test_no_drop_flags_inconclusive(self):
        rng = np.random.default_rng(12)
        n = 5
        block = self._block_with_spectrum([16.0, 8.0, 4.0, 2.0, 1.0], 10, n, rng)
        neighbors = match_all(np.zeros((n, n)), n)
        est = estimate_latent_dimension(block, neighbors, gap_ratio=1000.0)
        assert est.inconclusive
        assert est.r == min(10, n) - 1

    def test_gap_ratio_validated(self):
        with pytest.raises(ConfigError):
            estimate_latent_dimension(np.ones((4, 4)), [], gap_ratio=1.0)

    def test_needs_three_eigenvalues(self):
        x = np.random.default_rng(13).normal(size=(6, 2))
        ns = [knn_match(np.zeros((2, 2)), i, 2) for i in range(2)]
        with pytest.raises(ConfigError):
            estimate_latent_dimension(x, ns, gap_ratio=4.0)
