"""Panel container, CSV ingestion, row splitting and demeaning.

Matrices are oriented features x units: rows index features (or time
periods), columns index units. Missing cells are carried as an explicit
boolean mask (True = observed) with the numeric placeholder 0, never NaN.
All containers are immutable after construction; every operation here is a
pure function, so concurrent reads are safe.

Python-level indices are 0-based throughout; files and CLI output use
1-based unit/feature numbering.
"""

import csv
import math

import numpy as np

from .exceptions import ConfigError, DataError


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class DataMatrix:
    """Dense features-x-units panel with an observed-entry mask.

    Parameters
    ----------
    values : array-like, shape (n_features, n_units)
    mask : array-like of bool, same shape, optional
        True marks an observed cell. Defaults to all-observed.
    """

    def __init__(self, values, mask=None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        if mask is None:
            mask = np.ones(values.shape, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
        if mask.shape != values.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match values shape {values.shape}"
            )
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed cells must be finite")
        self.values = _readonly(values)
        self.mask = _readonly(mask)

    @property
    def n_features(self):
        return self.values.shape[0]

    @property
    def n_units(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_complete(self):
        return bool(self.mask.all())

    def zero_filled(self):
        """Complete copy with missing cells set to 0 and mask all True."""
        return DataMatrix(np.where(self.mask, self.values, 0.0))

    def __eq__(self, other):
        if not isinstance(other, DataMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.mask, other.mask
        )

    def __repr__(self):
        missing = int((~self.mask).sum())
        return f"DataMatrix({self.n_features}x{self.n_units}, missing={missing})"


class RowSplit:
    """Disjoint feature-index sets used to separate matching from PCA.

    ``rows_match`` feeds nearest-neighbor matching, ``rows_pca`` feeds the
    per-neighborhood PCA, and the optional ``rows_final`` holds the third
    portion used by the covariate-adjusted pipeline. The sets are sorted,
    pairwise disjoint and together cover range(n_features).
    """

    def __init__(self, rows_match, rows_pca, rows_final=None):
        parts = [np.sort(np.asarray(rows_match, dtype=int)),
                 np.sort(np.asarray(rows_pca, dtype=int))]
        if rows_final is not None:
            parts.append(np.sort(np.asarray(rows_final, dtype=int)))
        for part in parts:
            if part.size == 0:
                raise ConfigError("row split produced an empty set")
        combined = np.concatenate(parts)
        p = combined.size
        if not np.array_equal(np.sort(combined), np.arange(p)):
            raise ValueError("row split sets must partition range(n_features)")
        self.rows_match = _readonly(parts[0])
        self.rows_pca = _readonly(parts[1])
        self.rows_final = _readonly(parts[2]) if rows_final is not None else None
        self.n_features = p

    @property
    def is_three_way(self):
        return self.rows_final is not None

    def __repr__(self):
        sizes = [self.rows_match.size, self.rows_pca.size]
        if self.rows_final is not None:
            sizes.append(self.rows_final.size)
        return f"RowSplit(sizes={tuple(sizes)})"


def load_csv(path, missing_token="NA", header=False):
    """Read a rectangular CSV of numbers into a DataMatrix.

    Cells equal to ``missing_token`` are marked unobserved and stored as 0.
    Raises DataError for ragged rows (with the 1-based row number) or
    non-numeric cells (with 1-based coordinates).
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, record in enumerate(reader, start=1):
            if header and line_no == 1:
                continue
            if not record:
                continue
            rows.append((line_no, [cell.strip() for cell in record]))
    if not rows:
        raise DataError(f"{path}: no data rows")

    width = len(rows[0][1])
    data_row = 0
    values = np.zeros((len(rows), width))
    mask = np.ones((len(rows), width), dtype=bool)
    for line_no, record in rows:
        data_row += 1
        if len(record) != width:
            raise DataError(f"{path}: ragged row {data_row}")
        for j, cell in enumerate(record):
            if cell == missing_token:
                mask[data_row - 1, j] = False
                continue
            try:
                x = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell at row {data_row}, column {j + 1}: {cell!r}"
                ) from None
            if not math.isfinite(x):
                raise DataError(
                    f"{path}: non-finite cell at row {data_row}, column {j + 1}: {cell!r}"
                )
            values[data_row - 1, j] = x
    return DataMatrix(values, mask)


def save_csv(matrix, path, missing_token="NA", float_format=None):
    """Write a DataMatrix back to CSV; inverse of load_csv.

    With the default full-precision format a save/load round trip
    reproduces the matrix exactly.
    """
    fmt = (lambda x: repr(float(x))) if float_format is None else (
        lambda x: float_format % x
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(matrix.n_features):
            writer.writerow(
                [
                    fmt(matrix.values[i, j]) if matrix.mask[i, j] else missing_token
                    for j in range(matrix.n_units)
                ]
            )


def row_split(n_features, fractions, mode="contiguous", seed=None):
    """Split range(n_features) into 2 or 3 blocks with the given proportions.

    Contiguous mode assigns the first ceil(f1*p) indices to the matching
    block, the next ceil(f2*p) to the PCA block and the remainder to the
    final block; random mode permutes the indices with a seeded generator
    first. Deterministic given (n_features, fractions, mode, seed).
    """
    fractions = [float(f) for f in fractions]
    if len(fractions) not in (2, 3):
        raise ConfigError("fractions must have length 2 or 3")
    if any(f <= 0 for f in fractions):
        raise ConfigError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")
    if n_features < len(fractions):
        raise ConfigError(
            f"need at least {len(fractions)} rows, got {n_features}"
        )

    sizes = []
    for f in fractions[:-1]:
        sizes.append(int(math.ceil(f * n_features - 1e-9)))
    sizes.append(n_features - sum(sizes))
    if any(s <= 0 for s in sizes):
        raise ConfigError(f"row split produced an empty set (sizes {sizes})")

    if mode == "contiguous":
        order = np.arange(n_features)
    elif mode == "random":
        if seed is None:
            raise ConfigError("random split mode requires a seed")
        order = np.random.default_rng(seed).permutation(n_features)
    else:
        raise ConfigError(f"unknown split mode {mode!r}")

    bounds = np.cumsum(sizes)
    blocks = np.split(order, bounds[:-1])
    if len(blocks) == 2:
        return RowSplit(blocks[0], blocks[1])
    return RowSplit(blocks[0], blocks[1], blocks[2])


def save_split(split, path):
    """Persist a RowSplit as a text file of 1-based index lists."""
    with open(path, "w") as fh:
        fh.write("match: " + " ".join(str(i + 1) for i in split.rows_match) + "\n")
        fh.write("pca: " + " ".join(str(i + 1) for i in split.rows_pca) + "\n")
        if split.rows_final is not None:
            fh.write("final: " + " ".join(str(i + 1) for i in split.rows_final) + "\n")


def load_split(path):
    """Read a RowSplit written by save_split."""
    parts = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            name, _, rest = line.partition(":")
            name = name.strip()
            if name not in ("match", "pca", "final"):
                raise DataError(f"{path}: unknown split section {name!r}")
            parts[name] = [int(tok) - 1 for tok in rest.split()]
    if "match" not in parts or "pca" not in parts:
        raise DataError(f"{path}: split file needs 'match' and 'pca' sections")
    return RowSplit(parts["match"], parts["pca"], parts.get("final"))


def double_demean(matrix):
    """Subtract row and column means and add back the grand mean.

    Requires a complete matrix (no missing entries); the result has row and
    column means equal to zero (up to roundoff) and the operation is
    idempotent.
    """
    if isinstance(matrix, DataMatrix):
        if not matrix.is_complete:
            raise ValueError("double_demean requires a complete matrix")
        x = matrix.values
    else:
        x = np.asarray(matrix, dtype=float)
        if x.ndim != 2:
            raise ValueError("double_demean expects a 2-D matrix")
    row_means = x.mean(axis=1, keepdims=True)
    col_means = x.mean(axis=0, keepdims=True)
    return x - row_means - col_means + x.mean()


def mask_to_zero(matrix):
    """Return a copy with missing cells set to 0; the mask is unchanged."""
    return DataMatrix(np.where(matrix.mask, matrix.values, 0.0), matrix.mask)
