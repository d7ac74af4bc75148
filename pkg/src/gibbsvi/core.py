"""Data model: labeled datasets, observed matrices, Gaussian measures, priors.

All types are immutable after construction and safe to share across threads.
Labels are stored internally in {-1, +1} regardless of the tokens used on
disk; the loader maps any two-class labels.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    EmptyDatasetError,
    MissingFileError,
    NonNumericFeatureError,
    TooManyClassesError,
    UnknownPositiveLabelError,
)

SHARED = "shared"
DIAG = "diag"
FULL = "full"
FAMILIES = (SHARED, DIAG, FULL)


@dataclass(frozen=True)
class LabeledDataset:
    """A sample of feature rows with binary labels in {-1, +1}.

    ``feature_bound`` is the maximum absolute feature value, computed on
    construction (0 for an all-zero design).
    """

    features: np.ndarray   # (n, d)
    labels: np.ndarray     # (n,) values in {-1, +1}
    feature_bound: float = field(init=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-d array")
        if y.shape != (X.shape[0],):
            raise DimensionMismatchError(
                f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if X.shape[0] < 2 or X.shape[1] < 1:
            raise EmptyDatasetError("need n >= 2 rows and d >= 1 columns")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataError("labels must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_bound", float(np.abs(X).max()))
        X.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.labels > 0))

    @property
    def n_negative(self) -> int:
        return int(np.sum(self.labels < 0))

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=int)
        return LabeledDataset(self.features[idx].copy(), self.labels[idx].copy())

    def scaled_to_unit(self) -> "LabeledDataset":
        """Per-column scaling into [-1, 1] (divides by each column's max |.|).

        All-zero columns are left untouched. Affects ``feature_bound``.
        """
        scale = np.abs(self.features).max(axis=0)
        scale[scale == 0] = 1.0
        return LabeledDataset(self.features / scale, self.labels.copy())


@dataclass(frozen=True)
class ObservedMatrix:
    """Sparse observations of an m1 x m2 matrix.

    Indices are 1-based (rows in 1..m1, columns in 1..m2), matching the
    entries-CSV convention; duplicates are rejected.
    """

    rows: np.ndarray    # (n,) ints in 1..m1
    cols: np.ndarray    # (n,) ints in 1..m2
    values: np.ndarray  # (n,) floats
    m1: int
    m2: int

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=int)
        c = np.asarray(self.cols, dtype=int)
        v = np.asarray(self.values, dtype=float)
        if not (r.shape == c.shape == v.shape) or r.ndim != 1:
            raise DimensionMismatchError("rows, cols, values must be equal-length vectors")
        if self.m1 < 1 or self.m2 < 1:
            raise DataError("matrix dimensions must be positive")
        if r.size and (r.min() < 1 or r.max() > self.m1 or c.min() < 1 or c.max() > self.m2):
            raise DataError("entry index out of bounds")
        if not np.all(np.isfinite(v)):
            raise DataError("entry values must be finite")
        if len({(int(i), int(j)) for i, j in zip(r, c)}) != r.size:
            raise DataError("duplicate (row, col) pairs")
        object.__setattr__(self, "rows", r)
        object.__setattr__(self, "cols", c)
        object.__setattr__(self, "values", v)
        for a in (r, c, v):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.rows.size


@dataclass(frozen=True)
class IsotropicPrior:
    """Centred isotropic Gaussian prior with variance ``var`` per coordinate."""

    var: float
    dim: int

    def __post_init__(self):
        if not (self.var > 0):
            raise ConfigError("prior variance must be positive")
        if self.dim < 1:
            raise ConfigError("prior dimension must be >= 1")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(scale=np.sqrt(self.var), size=(size, self.dim))

    def log_density(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(theta)
        sq = np.sum(theta * theta, axis=1)
        return -0.5 * (sq / self.var + self.dim * np.log(2 * np.pi * self.var))


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian measure on R^d in one of three covariance parameterizations.

    family "shared": Sigma = var * I; "diag": Sigma = diag(variances);
    "full": Sigma = chol @ chol.T with chol lower-triangular, positive diagonal.
    """

    family: str
    mean: np.ndarray
    var: float = None          # shared
    variances: np.ndarray = None  # diag
    chol: np.ndarray = None    # full

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        if m.ndim != 1 or m.size < 1:
            raise DataError("mean must be a 1-d vector")
        object.__setattr__(self, "mean", m)
        m.setflags(write=False)
        d = m.size
        if self.family == SHARED:
            if self.var is None or not (self.var > 0):
                raise DataError("shared family needs var > 0")
        elif self.family == DIAG:
            v = np.asarray(self.variances, dtype=float)
            if v.shape != (d,) or not np.all(v > 0):
                raise DataError("diag family needs a length-d positive variance vector")
            object.__setattr__(self, "variances", v)
            v.setflags(write=False)
        elif self.family == FULL:
            C = np.asarray(self.chol, dtype=float)
            if C.shape != (d, d):
                raise DataError("full family needs a d x d Cholesky factor")
            if not np.allclose(C, np.tril(C)):
                raise DataError("Cholesky factor must be lower-triangular")
            if not np.all(np.diag(C) > 0):
                raise DataError("Cholesky diagonal must be positive")
            object.__setattr__(self, "chol", C)
            C.setflags(write=False)
        else:
            raise ConfigError(f"unknown family {self.family!r}")

    # constructors ------------------------------------------------------------

    @staticmethod
    def shared(mean, var: float) -> "GaussianMeasure":
        return GaussianMeasure(SHARED, np.asarray(mean, dtype=float), var=float(var))

    @staticmethod
    def diagonal(mean, variances) -> "GaussianMeasure":
        return GaussianMeasure(DIAG, np.asarray(mean, dtype=float),
                               variances=np.asarray(variances, dtype=float))

    @staticmethod
    def full(mean, chol) -> "GaussianMeasure":
        return GaussianMeasure(FULL, np.asarray(mean, dtype=float),
                               chol=np.asarray(chol, dtype=float))

    @staticmethod
    def from_prior(family: str, prior: IsotropicPrior) -> "GaussianMeasure":
        """The member of ``family`` equal to the prior (m=0, Sigma=var*I)."""
        d = prior.dim
        if family == SHARED:
            return GaussianMeasure.shared(np.zeros(d), prior.var)
        if family == DIAG:
            return GaussianMeasure.diagonal(np.zeros(d), np.full(d, prior.var))
        if family == FULL:
            return GaussianMeasure.full(np.zeros(d), np.sqrt(prior.var) * np.eye(d))
        raise ConfigError(f"unknown family {family!r}")

    # geometry ----------------------------------------------------------------

    @property
    def d(self) -> int:
        return self.mean.size

    def cov(self) -> np.ndarray:
        if self.family == SHARED:
            return self.var * np.eye(self.d)
        if self.family == DIAG:
            return np.diag(self.variances)
        return self.chol @ self.chol.T

    def quad_forms(self, V: np.ndarray) -> np.ndarray:
        """Row-wise v Sigma v^T for a matrix of row vectors V (k, d)."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if V.shape[1] != self.d:
            raise DimensionMismatchError(
                f"vectors have dimension {V.shape[1]}, measure has {self.d}")
        if self.family == SHARED:
            return self.var * np.sum(V * V, axis=1)
        if self.family == DIAG:
            return np.sum(V * V * self.variances, axis=1)
        U = V @ self.chol
        return np.sum(U * U, axis=1)

    def trace_cov(self) -> float:
        if self.family == SHARED:
            return self.d * self.var
        if self.family == DIAG:
            return float(np.sum(self.variances))
        return float(np.sum(self.chol * self.chol))

    def logdet_cov(self) -> float:
        if self.family == SHARED:
            return self.d * np.log(self.var)
        if self.family == DIAG:
            return float(np.sum(np.log(self.variances)))
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))

    def scale_cov(self, t: float) -> "GaussianMeasure":
        """Same mean, covariance multiplied by t > 0."""
        if not (t > 0):
            raise ConfigError("scale factor must be positive")
        if self.family == SHARED:
            return GaussianMeasure.shared(self.mean, self.var * t)
        if self.family == DIAG:
            return GaussianMeasure.diagonal(self.mean, self.variances * t)
        return GaussianMeasure.full(self.mean, self.chol * np.sqrt(t))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        Z = rng.standard_normal((size, self.d))
        if self.family == SHARED:
            return self.mean + np.sqrt(self.var) * Z
        if self.family == DIAG:
            return self.mean + np.sqrt(self.variances) * Z
        return self.mean + Z @ self.chol.T


# -- unconstrained parameter vector <-> measure --------------------------------
#
# Layout: [mean (d)] + covariance block, where the covariance block is
#   shared: [log sigma]                          (1)
#   diag:   [log sigma_1 .. log sigma_d]         (d)
#   full:   [log C_11 .. log C_dd, C_21, C_31, C_32, ...]  (d + d(d-1)/2)
# This is the parameterization all gradient-based optimizers work in.

def n_params(family: str, d: int) -> int:
    if family == SHARED:
        return d + 1
    if family == DIAG:
        return 2 * d
    if family == FULL:
        return d + d + d * (d - 1) // 2
    raise ConfigError(f"unknown family {family!r}")


def _tril_indices(d):
    return np.tril_indices(d, k=-1)


def to_vector(q: GaussianMeasure) -> np.ndarray:
    d = q.d
    if q.family == SHARED:
        return np.concatenate([q.mean, [0.5 * np.log(q.var)]])
    if q.family == DIAG:
        return np.concatenate([q.mean, 0.5 * np.log(q.variances)])
    i, j = _tril_indices(d)
    return np.concatenate([q.mean, np.log(np.diag(q.chol)), q.chol[i, j]])


def from_vector(family: str, d: int, vec: np.ndarray) -> GaussianMeasure:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (n_params(family, d),):
        raise DimensionMismatchError(
            f"expected {n_params(family, d)} parameters, got {vec.shape}")
    m = vec[:d]
    if family == SHARED:
        return GaussianMeasure.shared(m, np.exp(2.0 * vec[d]))
    if family == DIAG:
        return GaussianMeasure.diagonal(m, np.exp(2.0 * vec[d:]))
    C = np.zeros((d, d))
    np.fill_diagonal(C, np.exp(vec[d:2 * d]))
    i, j = _tril_indices(d)
    C[i, j] = vec[2 * d:]
    return GaussianMeasure.full(m, C)


# -- CSV ingestion --------------------------------------------------------------

def _parse_label_column(label_column, header):
    if header is not None and label_column in header:
        return header.index(label_column)
    try:
        return int(label_column)
    except (TypeError, ValueError):
        raise DataError(f"label column {label_column!r} not found") from None


def load_csv(path, label_column, positive_label) -> LabeledDataset:
    """Load a labeled dataset from a comma-separated file.

    The first row is treated as a header when any of its cells fails to
    parse as a number. ``label_column`` may be a header name or a 0-based
    column index; rows whose label token equals ``positive_label`` map to
    +1, the (single) other token maps to -1.
    """
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise EmptyDatasetError(f"{path} is empty")

    def numeric(tok):
        try:
            float(tok)
            return True
        except ValueError:
            return False

    header = None
    if not all(numeric(tok) for tok in rows[0]):
        header = [tok.strip() for tok in rows[0]]
        rows = rows[1:]
    if not rows:
        raise EmptyDatasetError(f"{path} has a header but no data rows")

    col = _parse_label_column(label_column, header)
    if col < 0 or col >= len(rows[0]):
        raise DataError(f"label column index {col} out of range")

    tokens = [row[col].strip() for row in rows]
    classes = sorted(set(tokens))
    if len(classes) > 2:
        raise TooManyClassesError(f"found {len(classes)} label values: {classes}")
    if str(positive_label) not in classes:
        raise UnknownPositiveLabelError(
            f"positive label {positive_label!r} not among {classes}")
    labels = np.where(np.asarray(tokens) == str(positive_label), 1.0, -1.0)

    feats = []
    for ridx, row in enumerate(rows):
        vals = []
        for cidx, tok in enumerate(row):
            if cidx == col:
                continue
            try:
                vals.append(float(tok))
            except ValueError:
                raise NonNumericFeatureError(
                    f"row {ridx}, column {cidx}: {tok!r} is not a number") from None
        feats.append(vals)
    lengths = {len(v) for v in feats}
    if len(lengths) != 1:
        raise DataError("ragged rows: inconsistent feature counts")
    return LabeledDataset(np.asarray(feats, dtype=float), labels)


def save_csv(ds: LabeledDataset, path, positive_token="1", negative_token="-1",
             label_name="label"):
    """Write a dataset back to CSV (features via repr, bit-exact round trip)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.d)] + [label_name])
        for i in range(ds.n):
            tok = positive_token if ds.labels[i] > 0 else negative_token
            w.writerow([repr(float(v)) for v in ds.features[i]] + [tok])


def load_entries_csv(path) -> ObservedMatrix:
    """Load (row, col, value) triples; 1-based indices; optional header."""
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise EmptyDatasetError(f"{path} is empty")
    try:
        int(rows[0][0])
    except ValueError:
        rows = rows[1:]
    if not rows:
        raise EmptyDatasetError(f"{path} has a header but no data rows")
    try:
        r = np.array([int(row[0]) for row in rows])
        c = np.array([int(row[1]) for row in rows])
        v = np.array([float(row[2]) for row in rows])
    except (ValueError, IndexError) as exc:
        raise DataError(f"malformed entries file: {exc}") from None
    return ObservedMatrix(r, c, v, m1=int(r.max()), m2=int(c.max()))


def split_folds(ds: LabeledDataset, k: int, seed: int):
    """Deterministic k-fold partition: list of (train_idx, test_idx) pairs.

    Folds are disjoint, cover all indices, and differ in size by at most 1.
    """
    if not (2 <= k <= ds.n):
        raise ConfigError(f"fold count {k} must be in [2, n={ds.n}]")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    folds = np.array_split(perm, k)
    out = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((np.sort(train), np.sort(test)))
    return out
