"""K-nearest-neighbor set construction and matching diagnostics."""

import numpy as np

from .exceptions import ConfigError


class NeighborSet:
    """Ordered nearest neighbors of one unit.

    ``indices`` lists the unit's own index first, then the remaining
    matches ordered by increasing distance (ties broken by unit index);
    ``radius`` is the largest distance from the unit to any member.
    """

    def __init__(self, unit, indices, radius):
        indices = np.asarray(indices, dtype=int)
        if len(np.unique(indices)) != indices.size:
            raise ValueError("neighbor indices must be distinct")
        if unit not in indices:
            raise ValueError(f"unit {unit} missing from its own neighbor set")
        self.unit = int(unit)
        self.indices = indices.copy()
        self.indices.setflags(write=False)
        self.radius = float(radius)

    @property
    def k(self):
        return self.indices.size

    @property
    def self_position(self):
        return int(np.flatnonzero(self.indices == self.unit)[0])

    def __repr__(self):
        return f"NeighborSet(unit={self.unit}, k={self.k}, radius={self.radius:.4g})"


def _check_distance_matrix(dist):
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValueError("distance matrix must be square")
    if np.any(np.diagonal(dist) != 0.0):
        raise ValueError("distance matrix must have a zero diagonal")
    return dist


def knn_match(dist, unit, k):
    """Return the k nearest neighbors of ``unit`` under ``dist``.

    Members are the k units with the smallest distance to ``unit``. The
    unit itself always comes first (its self-distance of zero wins every
    tie); remaining ties are broken by ascending unit index, which makes
    the output a deterministic total order.
    """
    dist = _check_distance_matrix(dist)
    n = dist.shape[0]
    if k < 1:
        raise ConfigError(f"K must be at least 1, got {k}")
    if k > n:
        raise ConfigError(f"K exceeds sample size ({k} > {n})")
    if not 0 <= unit < n:
        raise ValueError(f"unit index {unit} out of range")
    row = dist[unit]
    others = np.arange(n) != unit
    order = np.lexsort((np.arange(n), others, row))
    indices = order[:k]
    return NeighborSet(unit, indices, row[indices].max())


def match_all(dist, k):
    """Nearest-neighbor sets for every unit; same rules as knn_match."""
    dist = _check_distance_matrix(dist)
    return [knn_match(dist, i, k) for i in range(dist.shape[0])]


def neighbor_discrepancies(latents, neighbors):
    """Per-unit worst-case latent distance to the matched neighbors.

    ``latents`` holds the true latent variables, one column per unit
    (a 1-D vector is treated as a single latent dimension). Only
    meaningful in simulations or diagnostics where the latents are known;
    the empirical pipeline never sees them.
    """
    latents = np.asarray(latents, dtype=float)
    if latents.ndim == 1:
        latents = latents[None, :]
    if latents.ndim != 2:
        raise ValueError("latents must be a vector or an r x n matrix")
    n = latents.shape[1]
    if len(neighbors) != n:
        raise ValueError(
            f"latents have {n} units but {len(neighbors)} neighbor sets given"
        )
    out = np.empty(n)
    for ns in neighbors:
        if ns.indices.max() >= n:
            raise ValueError("neighbor index out of range for latents")
        diff = latents[:, ns.indices] - latents[:, [ns.unit]]
        out[ns.unit] = np.sqrt((diff * diff).sum(axis=0)).max()
    return out


def matching_discrepancy(latents, neighbors):
    """Largest latent distance between any unit and any of its matches."""
    return float(neighbor_discrepancies(latents, neighbors).max())


def save_neighbors(neighbors, dist, path, float_format="%.12g"):
    """Write neighbor sets as CSV (unit, rank, neighbor, distance), 1-based."""
    with open(path, "w") as fh:
        fh.write("unit,rank,neighbor,distance\n")
        for ns in neighbors:
            for rank, j in enumerate(ns.indices, start=1):
                fh.write(
                    f"{ns.unit + 1},{rank},{j + 1},{float_format % dist[ns.unit, j]}\n"
                )
