"""Distance functions on observed feature columns used for matching.

Four variants are supported, configurable by name:

* ``euclidean``   rho(v_i, v_j) = (1/p) * sum_l (v_il - v_jl)^2
* ``pseudo-max``  rho(v_i, v_j) = (1/p) * max_{l != i,j} |(v_i - v_j)' v_l|,
  which measures each pair through every third unit and stays informative
  under heteroskedastic noise
* ``average``     rho(v_i, v_j) = (1/p) * |sum_l (v_il - v_jl)|
* ``weighted``    squared Euclidean after rescaling coordinate l by
  sqrt(w_l), i.e. (1/p) * sum_l w_l (v_il - v_jl)^2

The squared-and-scaled Euclidean form is rank-equivalent to the plain
Euclidean norm for nearest-neighbor purposes (a monotone transform), so
matching results are unaffected by the choice of form.
"""

import numpy as np

from .exceptions import ConfigError

KINDS = ("euclidean", "pseudo-max", "average", "weighted")


class Distance:
    """A distance specification: a kind name plus optional weights."""

    def __init__(self, kind, weights=None):
        if kind not in KINDS:
            raise ConfigError(f"unknown distance kind {kind!r}; expected one of {KINDS}")
        if kind == "weighted":
            if weights is None:
                raise ConfigError("weighted distance requires a weight vector")
            weights = np.asarray(weights, dtype=float)
            if weights.ndim != 1:
                raise ConfigError("weights must be a 1-D vector")
            if np.any(weights < 0):
                raise ConfigError("weights must be non-negative")
            if not np.any(weights > 0):
                raise ConfigError("weights must not be all zero")
            weights = weights.copy()
            weights.setflags(write=False)
        elif weights is not None:
            raise ConfigError(f"distance kind {kind!r} takes no weights")
        self.kind = kind
        self.weights = weights

    def __repr__(self):
        if self.kind == "weighted":
            return f"Distance('weighted', {len(self.weights)} weights)"
        return f"Distance({self.kind!r})"


def as_distance(spec):
    """Coerce a string or Distance into a Distance."""
    if isinstance(spec, Distance):
        return spec
    if isinstance(spec, str):
        return Distance(spec)
    raise ConfigError(f"cannot interpret distance spec {spec!r}")


def _check_pair(v_i, v_j):
    v_i = np.asarray(v_i, dtype=float)
    v_j = np.asarray(v_j, dtype=float)
    if v_i.ndim != 1 or v_j.ndim != 1 or v_i.shape != v_j.shape:
        raise ValueError(
            f"vectors must be 1-D with equal length, got {v_i.shape} and {v_j.shape}"
        )
    if v_i.size < 1:
        raise ValueError("vectors must have length >= 1")
    return v_i, v_j


def euclidean_sq(v_i, v_j):
    """Mean squared coordinate difference between two feature columns."""
    v_i, v_j = _check_pair(v_i, v_j)
    d = v_i - v_j
    return float(d @ d) / v_i.size


def average_dist(v_i, v_j):
    """Absolute difference of the coordinate means, as a distance."""
    v_i, v_j = _check_pair(v_i, v_j)
    return float(abs((v_i - v_j).sum())) / v_i.size


def weighted_sq(v_i, v_j, weights):
    """Coordinate-rescaled squared Euclidean distance."""
    v_i, v_j = _check_pair(v_i, v_j)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != v_i.shape:
        raise ValueError("weights length must match vector length")
    d = v_i - v_j
    return float((weights * d) @ d) / v_i.size


def pseudo_max(x, i, j):
    """Pairwise distance of columns i and j measured through third columns.

    ``x`` holds feature columns; the distance is the largest absolute inner
    product of (column i - column j) with any column other than i and j,
    divided by the number of features. Needs at least three units.
    """
    x = np.asarray(x, dtype=float)
    p, n = x.shape
    if n < 3:
        raise ConfigError("pseudo-max needs at least three units")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"unit index out of range: ({i}, {j})")
    diff = x[:, i] - x[:, j]
    inner = diff @ x
    inner[i] = 0.0
    inner[j] = 0.0
    return float(np.abs(inner).max()) / p


def pairwise_distances(x, distance):
    """Full n x n distance matrix of the columns of ``x``.

    The result is symmetric with a zero diagonal for every kind.
    """
    distance = as_distance(distance)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a features x units matrix")
    p, n = x.shape
    min_units = 3 if distance.kind == "pseudo-max" else 2
    if n < min_units:
        raise ConfigError(
            f"{distance.kind} distance needs at least {min_units} units, got {n}"
        )

    if distance.kind in ("euclidean", "weighted"):
        if distance.kind == "weighted":
            w = distance.weights
            if w.size != p:
                raise ValueError(
                    f"weights length {w.size} must equal matching rows {p}"
                )
            xw = x * np.sqrt(w)[:, None]
        else:
            xw = x
        sq = (xw * xw).sum(axis=0)
        d = (sq[:, None] + sq[None, :] - 2.0 * (xw.T @ xw)) / p
        d = np.maximum(d, 0.0)
        d = 0.5 * (d + d.T)
    elif distance.kind == "average":
        col_sums = x.sum(axis=0)
        d = np.abs(col_sums[:, None] - col_sums[None, :]) / p
    else:  # pseudo-max
        gram = x.T @ x
        d = np.empty((n, n))
        for i in range(n):
            a = np.abs(gram[i][None, :] - gram)
            a[:, i] = -np.inf
            np.fill_diagonal(a, -np.inf)
            d[i] = a.max(axis=1) / p
        d = 0.5 * (d + d.T)

    np.fill_diagonal(d, 0.0)
    return d


def parse_distance(spec, load_weights=None):
    """Parse a CLI/config distance string.

    Accepts "euclidean", "pseudo-max", "average" or "weighted:<csv-path>";
    the weights file is a single row or column of non-negative numbers.
    """
    if isinstance(spec, Distance):
        return spec
    if spec.startswith("weighted:"):
        path = spec.split(":", 1)[1]
        if not path:
            raise ConfigError("weighted distance needs a weights file path")
        if load_weights is None:
            weights = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
        else:
            weights = load_weights(path)
        return Distance("weighted", weights)
    return Distance(spec)
