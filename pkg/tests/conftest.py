"""Shared fixtures: random instance factories and real-data loaders.

The Pima dataset cannot be bundled; tests that reproduce its published
error rates look for a CSV at $GIBBSVI_PIMA_CSV or tests/data/pima.csv
(either the 7-covariate npreg..age/type layout or the 8-covariate UCI
layout with an Outcome column) and fail with instructions otherwise.
"""

import os

import numpy as np
import pytest

from gibbsvi import core

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def random_dataset(rng, n=None, d=None, ensure_mixed=True):
    n = int(rng.integers(4, 20)) if n is None else n
    d = int(rng.integers(1, 4)) if d is None else d
    X = rng.standard_normal((n, d))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    if ensure_mixed:
        if np.all(y > 0):
            y[0] = -1.0
        if np.all(y < 0):
            y[0] = 1.0
    return core.LabeledDataset(X, y)


def random_measure(rng, family, d, mean_scale=1.0):
    m = mean_scale * rng.standard_normal(d)
    if family == "shared":
        return core.GaussianMeasure.shared(m, float(rng.uniform(0.2, 2.0)))
    if family == "diag":
        return core.GaussianMeasure.diagonal(m, rng.uniform(0.2, 2.0, d))
    A = 0.4 * rng.standard_normal((d, d))
    return core.GaussianMeasure.full(m, np.linalg.cholesky(A @ A.T + 0.3 * np.eye(d)))


def pima_csv_path():
    env = os.environ.get("GIBBSVI_PIMA_CSV")
    if env and os.path.exists(env):
        return env
    local = os.path.join(DATA_DIR, "pima.csv")
    if os.path.exists(local):
        return local
    return None


PIMA_HELP = (
    "Pima Indians Diabetes data is required but not bundled (no network in this "
    "environment and no approved package carries it). Provide a CSV at "
    "$GIBBSVI_PIMA_CSV or tests/data/pima.csv: either the classic 7-covariate "
    "layout with header npreg,glu,bp,skin,bmi,ped,age,type (type in {Yes,No}) "
    "or the UCI 8-covariate layout whose label column is named Outcome (1/0)."
)


def load_pima():
    """Load Pima as a LabeledDataset, or None when the file is absent."""
    path = pima_csv_path()
    if path is None:
        return None
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if "type" in header:
        return core.load_csv(path, "type", "Yes")
    if "Outcome" in header:
        return core.load_csv(path, "Outcome", "1")
    return core.load_csv(path, len(header) - 1, "1")


def with_intercept(ds):
    X = np.hstack([ds.features, np.ones((ds.n, 1))])
    return core.LabeledDataset(X, ds.labels.copy())


@pytest.fixture(scope="session")
def breast_dataset():
    sklearn = pytest.importorskip("sklearn.datasets")
    data = sklearn.load_breast_cancer()
    # target 0 = malignant; map malignant to +1 so "positive" flags disease
    y = np.where(data.target == 0, 1.0, -1.0)
    return core.LabeledDataset(np.asarray(data.data, dtype=float), y)


def overlapping_classes(rng, n, d, separation=1.2):
    """Two overlapping Gaussian classes, linearly separable only in part."""
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    centers = separation * np.ones(d) / np.sqrt(d)
    X = rng.standard_normal((n, d)) + np.outer(y, centers)
    return core.LabeledDataset(X, y)
