"""Empirical risks and their closed-form expectations under Gaussian measures.

For a Gaussian measure q = N(m, Sigma), every linear score <theta, v> is
N(<m, v>, v Sigma v^T), which yields exact expressions for the expected
zero-one, hinge and pairwise-ranking risks, together with analytic
gradients in the unconstrained parameterization of :mod:`gibbsvi.core`
(mean, log sigma / Cholesky entries).

Degenerate rows (zero feature or pair-difference vectors, where the
quadratic form vanishes) contribute explicit constants, never NaN.
"""

import numpy as np
from scipy.special import ndtr

from .core import DIAG, FULL, SHARED, GaussianMeasure, LabeledDataset, n_params
from .errors import ConfigError, DimensionMismatchError, NoMixedPairsError

_SQRT2PI = np.sqrt(2.0 * np.pi)

KINDS = ("01", "hinge", "auc")


def _phi(z):
    return np.exp(-0.5 * z * z) / _SQRT2PI


def _check_dim(d_vectors, d_theta):
    if d_vectors != d_theta:
        raise DimensionMismatchError(
            f"feature dimension {d_vectors} != parameter dimension {d_theta}")


def mixed_pair_diffs(ds: LabeledDataset) -> np.ndarray:
    """All X_i - X_j for labeled pairs (i positive, j negative), (n+ n-, d)."""
    pos = ds.features[ds.labels > 0]
    neg = ds.features[ds.labels < 0]
    if pos.shape[0] == 0 or neg.shape[0] == 0:
        raise NoMixedPairsError("need at least one positive and one negative label")
    return (pos[:, None, :] - neg[None, :, :]).reshape(-1, ds.d)


# -- empirical risks ------------------------------------------------------------

def empirical_01_risk(theta, ds: LabeledDataset) -> float:
    """Fraction of sign mismatches; <theta, x> = 0 predicts the positive class."""
    theta = np.asarray(theta, dtype=float)
    _check_dim(ds.d, theta.size)
    pred = np.where(ds.features @ theta >= 0, 1.0, -1.0)
    return float(np.mean(pred != ds.labels))


def empirical_hinge_risk(theta, ds: LabeledDataset) -> float:
    """(1/n) sum max(0, 1 - y_i <theta, x_i>)."""
    theta = np.asarray(theta, dtype=float)
    _check_dim(ds.d, theta.size)
    margins = ds.labels * (ds.features @ theta)
    return float(np.mean(np.maximum(0.0, 1.0 - margins)))


def empirical_auc_risk(theta, ds: LabeledDataset) -> float:
    """Pairwise ranking risk over ordered pairs, normalized by n(n-1).

    A pair (i, j) counts when the thresholded predictions order the labels
    the wrong way; only mixed-label pairs can contribute, each in both
    orderings. Equals 2 n+ n- / (n (n-1)) times the mixed-pair misorder
    fraction.
    """
    theta = np.asarray(theta, dtype=float)
    _check_dim(ds.d, theta.size)
    f = (ds.features @ theta >= 0).astype(float)
    fpos = f[ds.labels > 0]
    fneg = f[ds.labels < 0]
    if fpos.size == 0 or fneg.size == 0:
        return 0.0
    misordered = np.sum((fpos[:, None] - fneg[None, :]) < 0)
    return float(2.0 * misordered / (ds.n * (ds.n - 1)))


def empirical_mixed_pair_risk(theta, ds: LabeledDataset) -> float:
    """Fraction of mixed-label pairs whose scores are misordered.

    This is the n+ n- -normalized score-comparison risk whose expectation
    under a Gaussian measure is :func:`expected_auc_risk`; ties
    (<theta, x_i - x_j> = 0) count as correctly ordered.
    """
    theta = np.asarray(theta, dtype=float)
    _check_dim(ds.d, theta.size)
    diffs = mixed_pair_diffs(ds)
    return float(np.mean(diffs @ theta < 0))


# -- closed-form expectations ----------------------------------------------------

def expected_01_risk(q: GaussianMeasure, ds: LabeledDataset) -> float:
    """(1/n) sum Phi(-y_i <x_i, m> / sqrt(x_i Sigma x_i^T)).

    Rows with x_i = 0 contribute 1 when y_i = -1 (the zero score always
    predicts the positive class) and 0 otherwise.
    """
    _check_dim(ds.d, q.d)
    s2 = q.quad_forms(ds.features)
    a = ds.labels * (ds.features @ q.mean)
    terms = np.where(s2 > 0, ndtr(-a / np.sqrt(np.where(s2 > 0, s2, 1.0))),
                     (ds.labels < 0).astype(float))
    return float(np.mean(terms))


def _hinge_terms(q, ds):
    s2 = q.quad_forms(ds.features)   # Gamma_i Sigma Gamma_i^T = x_i Sigma x_i^T
    h = 1.0 - ds.labels * (ds.features @ q.mean)
    s = np.sqrt(np.where(s2 > 0, s2, 1.0))
    z = h / s
    terms = np.where(s2 > 0, h * ndtr(z) + s * _phi(z), np.maximum(0.0, h))
    return terms, h, s, s2


def expected_hinge_risk(q: GaussianMeasure, ds: LabeledDataset) -> float:
    """(1/n) sum of E max(0, 1 - <theta, Gamma_i>) with Gamma_i = y_i x_i.

    Since 1 - <theta, Gamma_i> is N(h_i, s_i^2) with h_i = 1 - <Gamma_i, m>
    and s_i^2 = Gamma_i Sigma Gamma_i^T, each term is
    h_i Phi(h_i/s_i) + s_i phi(h_i/s_i); the s_i -> 0 limit is max(0, h_i).
    """
    _check_dim(ds.d, q.d)
    terms, _, _, _ = _hinge_terms(q, ds)
    return float(np.mean(terms))


def expected_auc_risk(q: GaussianMeasure, ds: LabeledDataset) -> float:
    """Mean over mixed-label pairs of Phi(-<Gamma, m> / sqrt(Gamma Sigma Gamma^T)).

    Gamma runs over X_i - X_j for positive i, negative j (n+ n- pairs);
    identical feature rows (Gamma = 0) contribute 0 since tied scores are
    never strictly misordered.
    """
    _check_dim(ds.d, q.d)
    diffs = mixed_pair_diffs(ds)
    s2 = q.quad_forms(diffs)
    a = diffs @ q.mean
    terms = np.where(s2 > 0, ndtr(-a / np.sqrt(np.where(s2 > 0, s2, 1.0))), 0.0)
    return float(np.mean(terms))


EXPECTED = {"01": expected_01_risk, "hinge": expected_hinge_risk, "auc": expected_auc_risk}


def expected_risk(kind: str, q: GaussianMeasure, ds: LabeledDataset) -> float:
    if kind not in EXPECTED:
        raise ConfigError(f"unknown risk kind {kind!r}")
    return EXPECTED[kind](q, ds)


# -- analytic gradients -----------------------------------------------------------

def _cov_block_grad(q: GaussianMeasure, V, coeff, s, live):
    """Gradient of sum_i coeff_i * s_i(V_i) w.r.t. the covariance parameters.

    s_i = sqrt(V_i Sigma V_i^T); ``live`` masks rows with s_i > 0; returns the
    covariance block of the packed parameter vector.
    """
    d = q.d
    V = V[live]
    coeff = coeff[live]
    s = s[live]
    if q.family == SHARED:
        # s_i = sigma * ||v_i||: d s / d log sigma = s
        return np.array([np.sum(coeff * s)])
    if q.family == DIAG:
        # d s / d log sigma_k = sigma_k^2 v_ik^2 / s
        return (coeff / s) @ (V * V) * q.variances
    # full: d s / d C_jk = v_ij (V C)_ik / s, lower triangle only
    U = V @ q.chol
    G = V.T @ (U * (coeff / s)[:, None])
    G = np.tril(G)
    diag_scale = np.diag(G) * np.diag(q.chol)   # chain rule through log C_kk
    i, j = np.tril_indices(d, k=-1)
    return np.concatenate([diag_scale, G[i, j]])


def grad_expected_risk(kind: str, q: GaussianMeasure, ds: LabeledDataset) -> np.ndarray:
    """Exact gradient of the closed-form expected risk.

    Returned in the packed layout of :func:`gibbsvi.core.to_vector`:
    mean block first, then log-sigma / Cholesky block. Degenerate rows
    (zero vectors) are constants and contribute nothing.
    """
    _check_dim(ds.d, q.d)
    if kind == "01":
        V = ds.features
        w = 1.0 / ds.n
        s2 = q.quad_forms(V)
        live = s2 > 0
        s = np.sqrt(np.where(live, s2, 1.0))
        a = ds.labels * (V @ q.mean)
        z = -a / s
        pdf = np.where(live, _phi(z), 0.0)
        grad_m = w * (-(pdf / s * ds.labels) @ V)
        coeff = w * pdf * a / (s * s)           # d Phi(-a/s) / d s
        cov = _cov_block_grad(q, V, coeff, s, live)
    elif kind == "hinge":
        V = ds.labels[:, None] * ds.features    # Gamma_i
        w = 1.0 / ds.n
        _, h, s, s2 = _hinge_terms(q, ds)
        live = s2 > 0
        cdf = np.where(live, ndtr(h / s), 0.0)
        grad_m = w * (-(cdf) @ V)
        coeff = w * np.where(live, _phi(h / s), 0.0)
        cov = _cov_block_grad(q, V, coeff, s, live)
    elif kind == "auc":
        return grad_pair_score_risk(q, mixed_pair_diffs(ds))
    else:
        raise ConfigError(f"unknown risk kind {kind!r}")
    out = np.concatenate([grad_m, cov])
    assert out.shape == (n_params(q.family, q.d),)
    return out


def grad_pair_score_risk(q: GaussianMeasure, diffs: np.ndarray) -> np.ndarray:
    """Packed gradient of mean_p Phi(-<Gamma_p, m> / sqrt(Gamma_p Sigma Gamma_p^T)).

    ``diffs`` holds the pair-difference vectors Gamma_p as rows. Feeding a
    uniformly-sampled subset of the mixed pairs gives an unbiased estimate
    of the full ranking-risk gradient.
    """
    V = np.atleast_2d(diffs)
    _check_dim(V.shape[1], q.d)
    w = 1.0 / V.shape[0]
    s2 = q.quad_forms(V)
    live = s2 > 0
    s = np.sqrt(np.where(live, s2, 1.0))
    a = V @ q.mean
    z = -a / s
    pdf = np.where(live, _phi(z), 0.0)
    grad_m = w * (-(pdf / s) @ V)
    coeff = w * pdf * a / (s * s)
    cov = _cov_block_grad(q, V, coeff, s, live)
    return np.concatenate([grad_m, cov])


# -- vectorized empirical risks over many parameter vectors ----------------------

def batch_empirical_risk(kind: str, thetas: np.ndarray, ds: LabeledDataset) -> np.ndarray:
    """Empirical risk of each row of ``thetas`` (k, d), vectorized.

    Kinds: "01", "hinge", "auc" (the n(n-1)-normalized pair risk) and
    "pair" (the n+ n- -normalized score-comparison risk).
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    _check_dim(ds.d, thetas.shape[1])
    if kind == "pair":
        diffs = mixed_pair_diffs(ds)
        return np.mean(thetas @ diffs.T < 0, axis=1)
    scores = thetas @ ds.features.T             # (k, n)
    if kind == "01":
        pred = np.where(scores >= 0, 1.0, -1.0)
        return np.mean(pred != ds.labels, axis=1)
    if kind == "hinge":
        return np.mean(np.maximum(0.0, 1.0 - ds.labels * scores), axis=1)
    if kind == "auc":
        f = scores >= 0
        miss_pos = np.sum(~f[:, ds.labels > 0], axis=1)   # positives predicted 0
        hit_neg = np.sum(f[:, ds.labels < 0], axis=1)     # negatives predicted 1
        return 2.0 * miss_pos * hit_neg / (ds.n * (ds.n - 1))
    raise ConfigError(f"unknown risk kind {kind!r}")


# -- Monte Carlo reference (independent check, used by tests) ---------------------

def monte_carlo_expected_risk(kind: str, q: GaussianMeasure, ds: LabeledDataset,
                              n_draws: int, seed: int, chunk: int = 50_000):
    """Plain Monte Carlo estimate of E_{theta~q}[empirical risk(theta)].

    Returns (estimate, standard_error). Uses the empirical risk whose
    expectation the matching closed form computes (the score-comparison
    pair risk for kind "auc").
    """
    batch_kind = {"01": "01", "hinge": "hinge", "auc": "pair"}[kind]
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_draws:
        b = min(chunk, n_draws - done)
        vals = batch_empirical_risk(batch_kind, q.sample(rng, b), ds)
        total += vals.sum()
        total_sq += (vals * vals).sum()
        done += b
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0)
    return mean, np.sqrt(var / n_draws)
