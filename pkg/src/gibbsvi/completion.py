"""Mean-field variational matrix completion.

The model is Y = (U V^T)_{row,col} + noise with per-factor variances
gamma_k drawn from an inverse gamma prior. The variational family
factorizes across the rows of U, the rows of V, and the gamma vector;
coordinate ascent alternates exact Gaussian updates for the factor rows
and exact inverse-gamma updates for the variances, so the evidence lower
bound is nondecreasing sweep by sweep.

Row and column indices are 1-based throughout, matching the entries-CSV
convention of :class:`gibbsvi.core.ObservedMatrix`.
"""

import math

import numpy as np
from scipy.special import digamma, gammaln

from .core import ObservedMatrix
from .errors import ConfigError, DataError


class CompletionModel:
    """Variational state: Gaussian row blocks for U and V, inverse-gamma gammas.

    E[1/gamma_k] = gamma_shape_k / gamma_rate_k drives the row updates.
    """

    def __init__(self, m1, m2, rank, a, b, lam, seed=0, init_scale=0.1):
        if rank < 1:
            raise ConfigError("rank must be >= 1")
        if not (a > 0 and b > 0):
            raise ConfigError("inverse-gamma prior needs a > 0 and b > 0")
        if lam < 0:
            raise ConfigError("temperature must be >= 0")
        rng = np.random.default_rng(seed)
        self.m1, self.m2, self.rank = m1, m2, rank
        self.a, self.b, self.lam = float(a), float(b), float(lam)
        self.u_mean = init_scale * rng.standard_normal((m1, rank))
        self.v_mean = init_scale * rng.standard_normal((m2, rank))
        self.u_cov = np.tile(np.eye(rank), (m1, 1, 1))
        self.v_cov = np.tile(np.eye(rank), (m2, 1, 1))
        self.gamma_shape = np.full(rank, float(a))
        self.gamma_rate = np.full(rank, float(b))

    @property
    def e_inv_gamma(self) -> np.ndarray:
        return self.gamma_shape / self.gamma_rate

    def u_second_moment(self, j0: int) -> np.ndarray:
        """E[U_j^T U_j] (K x K) for 0-based row j0."""
        m = self.u_mean[j0]
        return np.outer(m, m) + self.u_cov[j0]

    def v_second_moment(self, i0: int) -> np.ndarray:
        m = self.v_mean[i0]
        return np.outer(m, m) + self.v_cov[i0]


def _gaussian_row_update(lam, n, e_inv_gamma, partner_means, partner_moments, values):
    precision = np.diag(e_inv_gamma) + (2.0 * lam / n) * partner_moments
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ ((2.0 * lam / n) * (values @ partner_means))
    return mean, cov


def update_row_u(model: CompletionModel, j: int, data: ObservedMatrix):
    """Exact Gaussian update of the U block for (1-based) row j.

    Precision: diag(E[1/gamma]) + (2 lam / n) sum over observations in row
    j of E[V_c^T V_c]; mean: precision^-1 (2 lam / n) sum Y E[V_c]. A row
    with no observations reverts to N(0, diag(1/E[1/gamma])).
    """
    if not (1 <= j <= model.m1):
        raise DataError(f"row {j} out of range 1..{model.m1}")
    mask = data.rows == j
    cols0 = data.cols[mask] - 1
    vals = data.values[mask]
    moments = sum((model.v_second_moment(c) for c in cols0),
                  np.zeros((model.rank, model.rank)))
    mean, cov = _gaussian_row_update(model.lam, data.n, model.e_inv_gamma,
                                     model.v_mean[cols0], moments, vals)
    model.u_mean[j - 1] = mean
    model.u_cov[j - 1] = cov
    return mean, cov


def update_row_v(model: CompletionModel, i: int, data: ObservedMatrix):
    """Mirror image of :func:`update_row_u` for the V block (1-based row i)."""
    if not (1 <= i <= model.m2):
        raise DataError(f"column-factor row {i} out of range 1..{model.m2}")
    mask = data.cols == i
    rows0 = data.rows[mask] - 1
    vals = data.values[mask]
    moments = sum((model.u_second_moment(r) for r in rows0),
                  np.zeros((model.rank, model.rank)))
    mean, cov = _gaussian_row_update(model.lam, data.n, model.e_inv_gamma,
                                     model.u_mean[rows0], moments, vals)
    model.v_mean[i - 1] = mean
    model.v_cov[i - 1] = cov
    return mean, cov


def update_gamma(model: CompletionModel, k: int):
    """Conjugate inverse-gamma update of factor variance k (1-based).

    Shape a + (m1 + m2)/2; rate b + (sum_j E[U_jk^2] + sum_i E[V_ik^2])/2.
    """
    if not (1 <= k <= model.rank):
        raise DataError(f"factor {k} out of range 1..{model.rank}")
    k0 = k - 1
    second = (np.sum(model.u_mean[:, k0] ** 2 + model.u_cov[:, k0, k0])
              + np.sum(model.v_mean[:, k0] ** 2 + model.v_cov[:, k0, k0]))
    model.gamma_shape[k0] = model.a + (model.m1 + model.m2) / 2.0
    model.gamma_rate[k0] = model.b + 0.5 * second
    return model.gamma_shape[k0], model.gamma_rate[k0]


def expected_squared_error(model: CompletionModel, data: ObservedMatrix) -> float:
    """sum_i E[(Y_i - (U V^T)_{X_i})^2] under the variational blocks."""
    total = 0.0
    for r, c, y in zip(data.rows - 1, data.cols - 1, data.values):
        su = model.u_second_moment(r)
        sv = model.v_second_moment(c)
        cross = float(model.u_mean[r] @ model.v_mean[c])
        total += y * y - 2.0 * y * cross + float(np.sum(su * sv))
    return total


def _gamma_kl_terms(model):
    """KL of the gamma block plus the E[log gamma] prices of the row priors."""
    a, b = model.a, model.b
    alpha, beta = model.gamma_shape, model.gamma_rate
    e_inv = alpha / beta
    e_log = np.log(beta) - digamma(alpha)
    log_q = alpha * np.log(beta) - gammaln(alpha) - (alpha + 1.0) * e_log - beta * e_inv
    log_p = a * math.log(b) - gammaln(a) - (a + 1.0) * e_log - b * e_inv
    return float(np.sum(log_q - log_p)), e_log, e_inv


def elbo(model: CompletionModel, data: ObservedMatrix) -> float:
    """Evidence lower bound, additive constant fixed to 0.

    -(lam/n) * expected squared error minus the KL of all variational
    blocks from the prior; only differences matter for the stopping rule.
    """
    kl_gamma, e_log_gamma, e_inv_gamma = _gamma_kl_terms(model)
    kl = kl_gamma
    for means, covs in ((model.u_mean, model.u_cov), (model.v_mean, model.v_cov)):
        rows = means.shape[0]
        second_diag = means ** 2 + covs[:, np.arange(model.rank), np.arange(model.rank)]
        sign, logdets = np.linalg.slogdet(covs)
        if np.any(sign <= 0):
            raise ConfigError("row covariance lost positive definiteness")
        # E[log q] - E[log p(rows | gamma)]; the 2*pi normalizers cancel exactly
        kl += (-0.5 * float(np.sum(logdets)) - 0.5 * model.rank * rows
               + 0.5 * rows * float(np.sum(e_log_gamma))
               + 0.5 * float(np.sum(second_diag * e_inv_gamma)))
    return -(model.lam / data.n) * expected_squared_error(model, data) - kl


def run_mean_field(data: ObservedMatrix, rank: int, a: float, b: float, lam: float,
                   tol: float = 1e-8, max_sweeps: int = 200, seed: int = 0):
    """Cyclic coordinate ascent until the ELBO stabilizes.

    One sweep updates every U row, every V row, then every gamma entry.
    Returns (model, elbo_trace) with one trace value per completed sweep.
    """
    if tol < 0:
        raise ConfigError("tol must be >= 0")
    model = CompletionModel(data.m1, data.m2, rank, a, b, lam, seed=seed)
    trace = []
    for _ in range(max_sweeps):
        for j in range(1, data.m1 + 1):
            update_row_u(model, j, data)
        for i in range(1, data.m2 + 1):
            update_row_v(model, i, data)
        for k in range(1, rank + 1):
            update_gamma(model, k)
        trace.append(elbo(model, data))
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol:
            break
    return model, trace


def predict_entry(model: CompletionModel, row: int, col: int) -> float:
    """Posterior-mean prediction E[U_row] . E[V_col] (1-based indices)."""
    if not (1 <= row <= model.m1 and 1 <= col <= model.m2):
        raise DataError(f"entry ({row}, {col}) out of range "
                        f"1..{model.m1} x 1..{model.m2}")
    return float(model.u_mean[row - 1] @ model.v_mean[col - 1])


def small_b_threshold(beta: float, m1: int, m2: int, rank: int) -> float:
    """Largest prior rate b compatible with the smallness rule.

    b <= 1 / (2 beta max(m1, m2) log(2 K max(m1, m2))); exposed so
    experiments can respect the hypothesis, never enforced.
    """
    if beta <= 0:
        raise ConfigError("beta must be positive")
    m = max(m1, m2)
    return 1.0 / (2.0 * beta * m * math.log(2.0 * rank * m))
