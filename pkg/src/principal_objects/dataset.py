"""Finite weighted datasets with missing cells, and the distances on them.

A missing cell is recorded in a boolean ``gaps`` mask. Scalar products and
distances between two observations only run over coordinates present in
both, so every method built from them works on incomplete data unchanged.
"""

import csv
import io
import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    DegenerateSupportError,
    DimensionMismatchError,
    EmptyInputError,
    InvariantViolation,
    ParseError,
    SequenceTooShortError,
)

__all__ = [
    "DataMatrix",
    "GappedVector",
    "Partition",
    "TableData",
    "gapped_dot",
    "gapped_distance",
    "mean_point",
    "msd_weighted",
    "data_radius",
    "load_table",
    "read_table",
    "read_fasta",
    "triplet_frequencies",
    "TRIPLETS",
    "load_iris",
]


def _freeze(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GappedVector:
    values: np.ndarray
    gaps: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        gaps = np.array(self.gaps, dtype=bool).reshape(-1)
        if values.shape != gaps.shape:
            raise DimensionMismatchError("values and gaps differ in length")
        if gaps.all():
            raise InvariantViolation("gapped vector has no present coordinate")
        values = np.where(gaps, 0.0, values)
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "gaps", _freeze(gaps))

    @classmethod
    def from_array(cls, arr):
        """Build from an array in which NaN marks a missing value."""
        arr = np.asarray(arr, dtype=np.float64)
        return cls(np.nan_to_num(arr), np.isnan(arr))

    @property
    def present(self):
        return ~self.gaps

    def __len__(self):
        return self.values.shape[0]


def _as_gapped(x):
    if isinstance(x, GappedVector):
        return x
    return GappedVector.from_array(x)


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """N weighted observations in R^m; ``gaps[i, j]`` is True where x_ij is missing."""

    values: np.ndarray
    gaps: np.ndarray = None
    weights: np.ndarray = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
            raise EmptyInputError("data matrix needs N >= 1 rows and m >= 1 columns")
        n, m = values.shape
        if self.gaps is None:
            gaps = np.zeros((n, m), dtype=bool)
        else:
            gaps = np.array(self.gaps, dtype=bool)
            if gaps.shape != (n, m):
                raise DimensionMismatchError(f"gap mask shape {gaps.shape} != {(n, m)}")
        if self.weights is None:
            weights = np.ones(n)
        else:
            weights = np.array(self.weights, dtype=np.float64).reshape(-1)
            if weights.shape != (n,):
                raise DimensionMismatchError("one weight per row is required")
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise InvariantViolation("weights must be finite and positive")
        if not np.all(np.isfinite(values[~gaps])):
            raise InvariantViolation("present values must be finite")
        full_rows = np.flatnonzero(gaps.all(axis=1))
        if full_rows.size:
            raise InvariantViolation(f"row {full_rows[0]} has no present value")
        empty_cols = np.flatnonzero(gaps.all(axis=0))
        if empty_cols.size:
            raise InvariantViolation(f"column {empty_cols[0]} has no present value")
        values = np.where(gaps, 0.0, values)
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "gaps", _freeze(gaps))
        object.__setattr__(self, "weights", _freeze(weights))

    @classmethod
    def from_array(cls, arr, weights=None):
        """Build from an array in which NaN marks a missing value."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        return cls(np.nan_to_num(arr), np.isnan(arr), weights)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def complete(self):
        return not self.gaps.any()

    @property
    def present(self):
        return ~self.gaps

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def row(self, i):
        return GappedVector(self.values[i], self.gaps[i])

    def to_array(self):
        """Copy of the values with NaN in missing cells."""
        return np.where(self.gaps, np.nan, self.values)

    def with_values(self, values):
        return DataMatrix(values, self.gaps, self.weights)

    def subset(self, rows):
        rows = np.asarray(rows)
        return DataMatrix(self.values[rows], self.gaps[rows], self.weights[rows])


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of each data row to one of ``k`` sets."""

    assignment: np.ndarray
    k: int
    counts: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64).reshape(-1)
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise InvariantViolation("assignment index out of range")
        object.__setattr__(self, "assignment", _freeze(a))
        object.__setattr__(self, "counts", _freeze(np.bincount(a, minlength=self.k)))

    def members(self, j):
        return np.flatnonzero(self.assignment == j)

    def __eq__(self, other):
        return (
            isinstance(other, Partition)
            and self.k == other.k
            and np.array_equal(self.assignment, other.assignment)
        )


def gapped_dot(x, y):
    """Scalar product over the coordinates present in both vectors (0 if none)."""
    x, y = _as_gapped(x), _as_gapped(y)
    if len(x) != len(y):
        raise DimensionMismatchError("vectors differ in length")
    shared = x.present & y.present
    return float(np.dot(x.values[shared], y.values[shared]))


def gapped_distance(x, y):
    """Euclidean distance over the coordinates present in both vectors.

    Raises DegenerateSupportError when no coordinate is shared; the distance
    is undefined there, and reporting 0 would corrupt nearest-point searches.
    """
    x, y = _as_gapped(x), _as_gapped(y)
    if len(x) != len(y):
        raise DimensionMismatchError("vectors differ in length")
    shared = x.present & y.present
    if not shared.any():
        raise DegenerateSupportError("vectors share no present coordinate")
    diff = x.values[shared] - y.values[shared]
    return math.sqrt(float(np.dot(diff, diff)))


def mean_point(X):
    """Weighted mean point; per coordinate over the present cells when gapped.

    This is the minimiser of the weighted sum of squared gapped distances.
    """
    w = X.weights[:, None] * X.present
    return (w * X.values).sum(axis=0) / w.sum(axis=0)


def nearest(X, points):
    """Nearest row of ``points`` for every observation, with squared distances."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0:
        raise EmptyInputError("point set is empty")
    if points.shape[1] != X.m:
        raise DimensionMismatchError(f"points have dimension {points.shape[1]}, data {X.m}")
    return kernels.nearest_point(X.values, X.gaps, points)


def msd_weighted(X, Y):
    """Root of the weighted mean squared distance from X to its nearest points in Y.

    The outer square root is part of the definition, so this is an RMS quantity.
    """
    _, d2 = nearest(X, Y)
    return math.sqrt(float(np.dot(X.weights, d2)) / X.total_weight)


def data_radius(X):
    """Largest distance from an observation to the mean point."""
    _, d2 = nearest(X, mean_point(X)[None, :])
    return math.sqrt(float(d2.max()))


# ---------------------------------------------------------------- ingestion


@dataclass(frozen=True)
class TableData:
    data: DataMatrix
    columns: tuple
    labels: tuple = None


def _open_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return io.StringIO(fh.read())
    text = source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return io.StringIO(text)


def _column_index(spec, columns, width):
    if spec is None:
        return None
    if isinstance(spec, int) or (isinstance(spec, str) and spec.lstrip("-").isdigit()):
        idx = int(spec)
        if idx < 0:
            idx += width
        if not 0 <= idx < width:
            raise ParseError(f"column index {spec} out of range")
        return idx
    if spec not in columns:
        raise ParseError(f"no column named {spec!r}")
    return columns.index(spec)


def read_table(source, delimiter=",", gap_token="NA", header=False,
               weight_column=None, label_column=None):
    """Parse delimited text into a DataMatrix plus column names and labels.

    ``source`` may be a path, bytes, or a text/binary file object. Cells equal
    to ``gap_token`` (or empty) become gaps. Row and column numbers in errors
    are zero-based and count data rows only.
    """
    reader = csv.reader(_open_text(source), delimiter=delimiter)
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if header:
        if not rows:
            raise EmptyInputError("input has no header row")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise EmptyInputError("input has no data rows")
    width = len(rows[0])
    if not header:
        names = [f"x{j}" for j in range(width)]
    wcol = _column_index(weight_column, names, width)
    lcol = _column_index(label_column, names, width)
    data_cols = [j for j in range(width) if j not in (wcol, lcol)]
    if not data_cols:
        raise EmptyInputError("no data columns remain")
    n = len(rows)
    values = np.zeros((n, len(data_cols)))
    gaps = np.zeros((n, len(data_cols)), dtype=bool)
    weights = np.ones(n)
    labels = [] if lcol is not None else None
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"expected {width} cells, found {len(row)}", row=i)
        for out_j, j in enumerate(data_cols):
            cell = row[j].strip()
            if cell == gap_token or cell == "":
                gaps[i, out_j] = True
                continue
            try:
                values[i, out_j] = float(cell)
            except ValueError:
                raise ParseError(f"malformed numeric cell {cell!r}", row=i, column=j) from None
        if wcol is not None:
            try:
                weights[i] = float(row[wcol])
            except ValueError:
                raise ParseError(f"malformed weight {row[wcol]!r}", row=i, column=wcol) from None
        if lcol is not None:
            labels.append(row[lcol].strip())
    full = np.flatnonzero(gaps.all(axis=1))
    if full.size:
        raise InvariantViolation(f"row {full[0]} is fully gapped")
    empty = np.flatnonzero(gaps.all(axis=0))
    if empty.size:
        raise InvariantViolation(f"column {data_cols[empty[0]]} is fully gapped")
    bad_w = np.flatnonzero(~(weights > 0))
    if bad_w.size:
        raise InvariantViolation(f"row {bad_w[0]} has a non-positive weight")
    data = DataMatrix(values, gaps, weights)
    return TableData(data, tuple(names[j] for j in data_cols),
                     tuple(labels) if labels is not None else None)


def load_table(source, delimiter=",", gap_token="NA", header=False, weight_column=None):
    return read_table(source, delimiter, gap_token, header, weight_column).data


def load_iris():
    """The bundled 150x4 Iris table with species labels."""
    from importlib import resources

    path = resources.files("principal_objects").joinpath("data/iris.csv")
    return read_table(path.read_bytes(), header=True, label_column="species")


# ------------------------------------------------------------------ genome

TRIPLETS = tuple("".join(t) for t in itertools.product("ACGT", repeat=3))
_TRIPLET_INDEX = {t: i for i, t in enumerate(TRIPLETS)}


def read_fasta(source):
    """Concatenate all non-header lines of a FASTA text into one upper-case string."""
    text = _open_text(source).read()
    parts = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith(">")]
    return "".join(parts).upper()


def triplet_counts(fragment):
    """Counts of non-overlapping triplets read from the fragment start.

    Triplets containing a symbol outside ACGT are skipped.
    """
    counts = np.zeros(len(TRIPLETS))
    for start in range(0, len(fragment) - 2, 3):
        j = _TRIPLET_INDEX.get(fragment[start:start + 3])
        if j is not None:
            counts[j] += 1
    return counts


def triplet_frequencies(sequence, fragment_width, n_fragments, rng):
    """Sample fragments and represent each by its 64 triplet frequencies.

    Start positions are drawn uniformly with replacement. Each row sums to 1.
    """
    sequence = sequence.upper()
    if fragment_width < 3:
        raise ValueError("fragment width must be at least 3")
    if len(sequence) < fragment_width:
        raise SequenceTooShortError(
            f"sequence of length {len(sequence)} is shorter than fragment width {fragment_width}")
    rng = np.random.default_rng(rng)
    starts = rng.integers(0, len(sequence) - fragment_width + 1, size=n_fragments)
    rows = np.empty((n_fragments, len(TRIPLETS)))
    for i, s in enumerate(starts):
        counts = triplet_counts(sequence[s:s + fragment_width])
        total = counts.sum()
        if total == 0:
            raise InvariantViolation(f"fragment at position {s} has no valid triplet")
        rows[i] = counts / total
    return DataMatrix(rows)
