"""Adaptive tempering SMC: the gold-standard sampler for Gibbs measures.

Targets the sequence pi_t proportional to exp(-lambda_t r(theta)) * prior,
adapting the temperature ladder so each incremental effective sample size
matches tau * N, with systematic resampling and Gaussian random-walk
Metropolis moves whose proposal covariance is kappa times the particle
covariance. Weight arithmetic uses the log-sum-exp pattern throughout, so
large temperature jumps cannot underflow.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import IsotropicPrior, LabeledDataset
from .errors import AllZeroWeightsError, ConfigError
from .risk import batch_empirical_risk


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted particle approximation of the Gibbs measure at ``lam``."""

    particles: np.ndarray   # (N, d)
    weights: np.ndarray     # (N,), normalized
    lam: float
    log_z: float
    ladder: tuple

    def __post_init__(self):
        P = np.asarray(self.particles, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if P.ndim != 2 or P.shape[0] < 2:
            raise ConfigError("need at least 2 particles")
        if w.shape != (P.shape[0],) or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ConfigError("weights must be finite, nonnegative, length N")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("weights must sum to 1")
        if not math.isfinite(self.log_z):
            raise ConfigError("normalizing constant must be positive and finite")
        lad = tuple(float(x) for x in self.ladder)
        if any(b <= a for a, b in zip(lad, lad[1:])):
            raise ConfigError("temperature ladder must be strictly increasing")
        object.__setattr__(self, "particles", P)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "ladder", lad)

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def z(self) -> float:
        return math.exp(self.log_z)

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of nonnegative weights."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise AllZeroWeightsError("all weights are zero")
    return float(total * total / np.sum(w * w))


def _log_ess(log_weights) -> float:
    return float(np.exp(2.0 * logsumexp(log_weights) - logsumexp(2.0 * log_weights)))


def solve_next_temperature(risks, lam_current: float, tau: float, lam_max: float,
                           rel_tol: float = 1e-8) -> float:
    """Smallest temperature increase delta with ESS(delta) = tau * N.

    Incremental weights are exp(-delta * r_i); returns ``lam_max`` when even
    the full jump keeps ESS >= tau * N (the final stage of the loop).
    """
    if not (0.0 < tau < 1.0):
        raise ConfigError("tau must be in (0, 1)")
    if lam_max <= lam_current:
        return lam_max
    r = np.asarray(risks, dtype=float)
    n = r.size
    target = tau * n
    delta_max = lam_max - lam_current

    def ess_at(delta):
        return _log_ess(-delta * r)

    if ess_at(delta_max) >= target:
        return lam_max
    lo, hi = 0.0, delta_max
    while hi - lo > rel_tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if ess_at(mid) >= target:
            lo = mid
        else:
            hi = mid
    return lam_current + 0.5 * (lo + hi)


def systematic_resample(weights, n_out: int, u: float) -> np.ndarray:
    """Systematic resampling from one uniform draw; 0-based ancestor indices.

    Walks the cumulative ladder C_m = sum_{j<=m} n_out * W_j with the points
    s = u, u+1, ..., u+n_out-1, picking for each s the first m with
    C_m >= s. Deterministic given u.
    """
    w = np.asarray(weights, dtype=float)
    if not (0.0 <= u < 1.0):
        raise ConfigError("u must lie in [0, 1)")
    cumulative = np.cumsum(n_out * w)
    points = u + np.arange(n_out)
    idx = np.searchsorted(cumulative, points, side="left")
    return np.minimum(idx, w.size - 1)


def metropolis_move(particles, risk_fn, prior: IsotropicPrior, lam: float,
                    kappa: float, steps: int, rng: np.random.Generator,
                    risks=None):
    """Random-walk Metropolis sweeps leaving exp(-lam * r) * prior invariant.

    Proposal covariance is kappa times the particle covariance (regularized
    by +1e-9 I when not SPD). Returns (particles, risks, acceptance_rate).
    """
    if not (kappa > 0):
        raise ConfigError("kappa must be positive")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    P = np.asarray(particles, dtype=float)
    n, d = P.shape
    centered = P - P.mean(axis=0)
    cov = kappa * (centered.T @ centered) / max(n - 1, 1)
    try:
        root = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        root = np.linalg.cholesky(cov + 1e-9 * np.eye(d))
    if risks is None:
        risks = risk_fn(P)
    logp = -lam * risks + prior.log_density(P)
    accepted = 0
    for _ in range(steps):
        proposal = P + rng.standard_normal((n, d)) @ root.T
        prop_risks = risk_fn(proposal)
        prop_logp = -lam * prop_risks + prior.log_density(proposal)
        take = np.log(rng.random(n)) < prop_logp - logp
        P = np.where(take[:, None], proposal, P)
        risks = np.where(take, prop_risks, risks)
        logp = np.where(take, prop_logp, logp)
        accepted += int(take.sum())
    return P, risks, accepted / (steps * n)


@dataclass(frozen=True)
class StageDiagnostics:
    lam: float
    ess_before_resample: float
    acceptance_rate: float   # nan on the final stage (no move happens)
    log_z: float


def run_tempering(risk_fn, prior: IsotropicPrior, lam_target: float, n_particles: int,
                  tau: float = 0.5, kappa: float = 0.3, seed: int = 0,
                  mh_steps: int = 5):
    """Full tempering loop against an arbitrary vectorized risk function.

    ``risk_fn`` maps a (N, d) particle array to (N,) empirical risks.
    Returns (ParticleCloud, diagnostics list). The final stage caps the
    temperature at ``lam_target``, updates the normalizing constant with
    the capped incremental weight, and returns the reweighted cloud without
    a further resample/move. Fully deterministic given the seed.
    """
    if n_particles < 2:
        raise ConfigError("need at least 2 particles")
    if lam_target < 0:
        raise ConfigError("target temperature must be >= 0")
    rng = np.random.default_rng(seed)
    P = prior.sample(rng, n_particles)
    lam = 0.0
    log_z = 0.0
    ladder = [0.0]
    diagnostics = []
    if lam_target == 0.0:
        cloud = ParticleCloud(P, np.full(n_particles, 1.0 / n_particles),
                              0.0, 0.0, (0.0,))
        return cloud, diagnostics
    while True:
        risks = np.asarray(risk_fn(P), dtype=float)
        lam_next = solve_next_temperature(risks, lam, tau, lam_target)
        logw = -(lam_next - lam) * risks
        log_z += float(logsumexp(logw)) - math.log(n_particles)
        w = np.exp(logw - logsumexp(logw))
        ess_val = ess(w)
        ladder.append(lam_next)
        if lam_next >= lam_target:
            diagnostics.append(StageDiagnostics(lam_next, ess_val, math.nan, log_z))
            cloud = ParticleCloud(P, w / w.sum(), lam_target, log_z, tuple(ladder))
            return cloud, diagnostics
        idx = systematic_resample(w, n_particles, rng.random())
        P = P[idx]
        P, _, acc = metropolis_move(P, risk_fn, prior, lam_next, kappa, mh_steps, rng)
        diagnostics.append(StageDiagnostics(lam_next, ess_val, acc, log_z))
        lam = lam_next


def run_tempering_smc(ds: LabeledDataset, prior: IsotropicPrior, lam_target: float,
                      kind: str = "01", n_particles: int = 1000, tau: float = 0.5,
                      kappa: float = 0.3, seed: int = 0, mh_steps: int = 5):
    """Tempering SMC for the Gibbs measure of a dataset risk kind.

    Kinds: "01", "hinge", "auc" (the pairwise ranking risk).
    """
    if ds.d != prior.dim:
        raise ConfigError(f"dataset dimension {ds.d} != prior dimension {prior.dim}")

    def risk_fn(thetas):
        return batch_empirical_risk(kind, thetas, ds)

    return run_tempering(risk_fn, prior, lam_target, n_particles, tau, kappa,
                         seed, mh_steps)
