"""Per-neighborhood principal component extraction and mean reconstruction.

For each unit the matched columns of the PCA-split rows form a local block
``B`` of shape (p, K). With ``M = B B' / (p K)``, the local model is

    factors      F = sqrt(p) * (top-d eigenvectors of M),
    eigenvalues  omega = top-d eigenvalues of M,
    loadings     L = B' F / p,

which satisfies F'F / p = I and L'L / K = diag(omega) exactly, and F L' is
the best rank-d approximation of B. Factors are identified only up to
rotation; a deterministic sign convention (largest-magnitude entry of each
factor column positive) makes outputs reproducible while every consumed
quantity depends on the product F L' only.

The eigendecomposition runs on the smaller Gram side: the p x p Gram when
p <= K, otherwise the K x K Gram with the standard duality recovery
F = B v / sqrt(K * omega). Near-zero eigenvalues make the duality recovery
unstable, so degenerate blocks fall back to a thin SVD of the block.
"""

import math

import numpy as np

from .exceptions import ConfigError, NumericalError

_DEGENERATE_RTOL = 1e-10


class FixedFactors:
    """Always extract the same number of local factors."""

    def __init__(self, n_factors):
        n_factors = int(n_factors)
        if n_factors < 1:
            raise ConfigError(f"n_factors must be >= 1, got {n_factors}")
        self.n_factors = n_factors

    def __repr__(self):
        return f"FixedFactors({self.n_factors})"


class RatioFactors:
    """Pick the factor count from consecutive singular-value ratios.

    Returns the largest j in {1, ..., max_factors} whose ratio s_j/s_{j+1}
    meets the threshold, defaulting to 1. ``threshold=None`` uses
    log(log(K)), the scale that keeps extracted factors asymptotically
    stronger than the idiosyncratic noise; with ``max_factors=2`` this is
    exactly the rule "2 factors if s_2/s_3 >= log log K, else 1".
    """

    def __init__(self, max_factors=2, threshold=None):
        max_factors = int(max_factors)
        if max_factors < 1:
            raise ConfigError(f"max_factors must be >= 1, got {max_factors}")
        if threshold is not None and not threshold > 0:
            raise ConfigError("ratio threshold must be positive")
        self.max_factors = max_factors
        self.threshold = None if threshold is None else float(threshold)

    def __repr__(self):
        return f"RatioFactors(max_factors={self.max_factors}, threshold={self.threshold})"


def select_n_factors(singular_values, n_neighbors, rule):
    """Apply a factor-count rule to a descending spectrum."""
    if isinstance(rule, FixedFactors):
        return rule.n_factors
    if not isinstance(rule, RatioFactors):
        raise ConfigError(f"unknown factor-count rule {rule!r}")

    s = np.asarray(singular_values, dtype=float)
    if s.size < rule.max_factors + 1:
        raise ValueError(
            f"need at least {rule.max_factors + 1} singular values, got {s.size}"
        )
    if rule.threshold is None:
        if n_neighbors < 16:
            raise ConfigError(
                "log-log threshold needs at least 16 neighbors "
                f"(got K={n_neighbors})"
            )
        threshold = math.log(math.log(n_neighbors))
    else:
        threshold = rule.threshold

    for j in range(rule.max_factors, 0, -1):
        num, den = s[j - 1], s[j]
        ratio = np.inf if den == 0 else num / den
        if ratio >= threshold:
            return j
    return 1


class LocalFactorModel:
    """Estimated factors, loadings and spectrum for one unit's neighborhood."""

    def __init__(self, unit, factors, loadings, eigenvalues, spectrum, self_position):
        self.unit = int(unit)
        self.factors = factors
        self.loadings = loadings
        self.eigenvalues = eigenvalues
        self.spectrum = spectrum
        self.self_position = int(self_position)
        for a in (self.factors, self.loadings, self.eigenvalues, self.spectrum):
            a.setflags(write=False)

    @property
    def n_factors(self):
        return self.factors.shape[1]

    def fitted_block(self):
        """Rank-d reconstruction of the whole local block."""
        return self.factors @ self.loadings.T

    def own_column(self):
        """The unit's own reconstructed column within its neighborhood."""
        return self.factors @ self.loadings[self.self_position]

    def __repr__(self):
        return (
            f"LocalFactorModel(unit={self.unit}, shape="
            f"{self.factors.shape[0]}x{self.loadings.shape[0]}, "
            f"n_factors={self.n_factors})"
        )


def _gram_spectrum(block):
    """Descending eigenvalues of B B' / (p K), computed on the smaller side."""
    p, k = block.shape
    if p <= k:
        gram = block @ block.T / (p * k)
    else:
        gram = block.T @ block / (p * k)
    w = np.linalg.eigvalsh(gram)[::-1]
    return np.maximum(w, 0.0)


def _top_eigenbasis(block, d):
    """Top-d eigenvalues and row-space eigenvectors of B B' / (p K).

    Also returns the full descending spectrum from the same decomposition.
    """
    p, k = block.shape
    if p <= k:
        w, v = np.linalg.eigh(block @ block.T / (p * k))
        w = np.maximum(w[::-1], 0.0)
        return w[:d], v[:, ::-1][:, :d], w
    w, v = np.linalg.eigh(block.T @ block / (p * k))
    w = np.maximum(w[::-1], 0.0)
    top = w[:d]
    if w[0] > 0 and top[-1] > _DEGENERATE_RTOL * w[0]:
        basis = block @ v[:, ::-1][:, :d] / np.sqrt(top * p * k)
        return top, basis, w
    # Degenerate block (e.g. duplicate neighbor columns): duality recovery
    # would divide by ~0, so take the basis from a thin SVD instead.
    u, s, _ = np.linalg.svd(block, full_matrices=False)
    w = np.maximum(s * s / (p * k), 0.0)
    return w[:d], u[:, :d], w


def _apply_sign_convention(factors):
    """Flip factor columns so the largest-magnitude entry is positive."""
    for j in range(factors.shape[1]):
        col = factors[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            factors[:, j] = -col
    return factors


def local_pca(block, n_factors):
    """Extract ``n_factors`` principal components from a local block.

    Parameters
    ----------
    block : ndarray, shape (p, K)
        PCA-split rows of the matched columns, in neighbor order.
    n_factors : int
        Number of components; must not exceed min(p, K).

    Returns
    -------
    (factors, loadings, eigenvalues, spectrum) where factors is (p, d),
    loadings is (K, d), eigenvalues the top-d spectrum of B B' / (p K) and
    spectrum the full descending spectrum.
    """
    block = np.asarray(block, dtype=float)
    if block.ndim != 2:
        raise ValueError("local block must be 2-D")
    if not np.all(np.isfinite(block)):
        raise ValueError("local block must be finite")
    p, k = block.shape
    limit = min(p, k)
    if not 1 <= n_factors <= limit:
        raise ConfigError(
            f"n_factors must lie in [1, {limit}] for a {p}x{k} block, got {n_factors}"
        )
    try:
        eigenvalues, basis, spectrum = _top_eigenbasis(block, n_factors)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    factors = _apply_sign_convention(math.sqrt(p) * basis)
    loadings = block.T @ factors / p
    return factors, loadings, eigenvalues.copy(), spectrum.copy()


def fit_all(x_pca, neighbors, rule):
    """Fit a LocalFactorModel for every unit.

    ``x_pca`` holds the PCA-split rows (p, n); each unit's block stacks the
    columns of its matched neighbors in neighbor order (duplicates from
    exact distance ties are kept as duplicate columns). The factor count
    comes from ``rule`` applied to the block's singular values.
    """
    x_pca = np.asarray(x_pca, dtype=float)
    if x_pca.ndim != 2:
        raise ValueError("x_pca must be 2-D")
    p, n = x_pca.shape
    models = []
    for ns in neighbors:
        if ns.indices.max() >= n:
            raise ValueError("neighbor index out of range for PCA rows")
        block = x_pca[:, ns.indices]
        if isinstance(rule, FixedFactors):
            d = rule.n_factors
        else:
            spectrum = _gram_spectrum(block)
            singular_values = np.sqrt(spectrum * p * ns.k)
            d = select_n_factors(singular_values, ns.k, rule)
        try:
            factors, loadings, eigenvalues, spectrum = local_pca(block, d)
        except NumericalError as exc:
            raise NumericalError(f"unit {ns.unit}: {exc}") from exc
        models.append(
            LocalFactorModel(
                ns.unit, factors, loadings, eigenvalues, spectrum, ns.self_position
            )
        )
    return models


def reconstruct(models, neighbors):
    """Assemble the fitted mean matrix on the PCA rows.

    Column i of the result is unit i's own reconstructed column from its
    own neighborhood, i.e. the self column of F L'.
    """
    if len(models) != len(neighbors):
        raise ValueError("models and neighbor sets must align")
    n = len(models)
    p = models[0].factors.shape[0]
    out = np.empty((p, n))
    for model, ns in zip(models, neighbors):
        if model.unit != ns.unit:
            raise ValueError("models and neighbor sets must align by unit")
        if ns.indices[model.self_position] != model.unit:
            raise ValueError(f"unit {model.unit}: self position does not match")
        out[:, model.unit] = model.own_column()
    return out


class LatentDimension:
    """Result of the latent-dimension heuristic (see estimate_latent_dimension)."""

    def __init__(self, r, inconclusive, per_unit):
        self.r = int(r)
        self.inconclusive = bool(inconclusive)
        self.per_unit = np.asarray(per_unit, dtype=int)
        self.per_unit.setflags(write=False)

    def __repr__(self):
        tag = ", inconclusive" if self.inconclusive else ""
        return f"LatentDimension(r={self.r}{tag})"


def estimate_latent_dimension(x_pca, neighbors, gap_ratio=4.0):
    """Experimental heuristic for the number of latent variables.

    The leading local eigenvalue plays the role of a local constant; the
    group of eigenvalues of the second-largest magnitude counts the local
    linear terms, whose size estimates the latent dimension. Per unit, the
    eigenvalues after the first are scanned until the first drop where
    omega_j / omega_{j+1} >= gap_ratio; the count so far is that unit's
    estimate and the maximum over units is reported. Units whose spectrum
    never drops are counted in full and flagged inconclusive.

    This is a diagnostic only; treat the output as exploratory.
    """
    if not gap_ratio > 1:
        raise ConfigError(f"gap_ratio must exceed 1, got {gap_ratio}")
    x_pca = np.asarray(x_pca, dtype=float)
    per_unit = np.empty(len(neighbors), dtype=int)
    any_inconclusive = False
    for ns in neighbors:
        spectrum = _gram_spectrum(x_pca[:, ns.indices])
        m = spectrum.size
        if m < 3:
            raise ConfigError(
                "latent-dimension diagnostic needs at least 3 local eigenvalues"
            )
        r_i = m - 1
        found = False
        for j in range(1, m - 1):
            den = spectrum[j + 1]
            ratio = np.inf if den == 0 else spectrum[j] / den
            if ratio >= gap_ratio:
                r_i = j
                found = True
                break
        if not found:
            any_inconclusive = True
        per_unit[ns.unit] = r_i
    return LatentDimension(per_unit.max(), any_inconclusive, per_unit)
