"""Variational objective and the three optimizers.

* deterministic annealing over a ladder of increasing temperatures for the
  non-convex zero-one objective,
* a projected subgradient / accelerated gradient solver with a guaranteed
  suboptimality certificate for the (convex) hinge objective,
* minibatch SGD over mixed-label pairs for the ranking objective.

All gradient-based work happens in the unconstrained parameter vector of
:mod:`gibbsvi.core` (mean, log sigma, Cholesky); the convex solver works
directly in (mean, sigma) space, where the hinge objective is convex.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import bounds as bd
from . import risk as rk
from .core import (
    DIAG,
    FULL,
    SHARED,
    GaussianMeasure,
    IsotropicPrior,
    LabeledDataset,
    from_vector,
    n_params,
    to_vector,
)
from .errors import ConfigError, NonFiniteObjectiveError

_PHI0 = 1.0 / math.sqrt(2.0 * math.pi)


# -- objective and gradients -----------------------------------------------------

def objective(kind: str, q: GaussianMeasure, ds: LabeledDataset,
              prior: IsotropicPrior, lam: float) -> float:
    """Expected empirical risk plus KL(q, prior) / lambda (to be minimized)."""
    if not (lam > 0):
        raise ConfigError("lambda must be positive")
    return rk.expected_risk(kind, q, ds) + bd.kl_to_prior(q, prior) / lam


def grad_kl(q: GaussianMeasure, prior: IsotropicPrior) -> np.ndarray:
    """Packed gradient of KL(q, prior) in the unconstrained parameterization."""
    v = prior.var
    gm = q.mean / v
    if q.family == SHARED:
        gc = np.array([q.d * (q.var / v - 1.0)])
    elif q.family == DIAG:
        gc = q.variances / v - 1.0
    else:
        C = q.chol
        d = q.d
        diag = np.diag(C)
        i, j = np.tril_indices(d, k=-1)
        gc = np.concatenate([diag * diag / v - 1.0, C[i, j] / v])
    return np.concatenate([gm, gc])


def grad_objective(kind: str, q: GaussianMeasure, ds: LabeledDataset,
                   prior: IsotropicPrior, lam: float) -> np.ndarray:
    return rk.grad_expected_risk(kind, q, ds) + grad_kl(q, prior) / lam


def finite_difference_check(kind: str, q: GaussianMeasure, ds: LabeledDataset,
                            prior: IsotropicPrior, lam: float,
                            step: float = 1e-5) -> float:
    """Worst relative error of the analytic objective gradient.

    Central differences on every packed parameter; coordinates where both
    the analytic and numerical values are below 1e-8 fall back to the
    absolute error.
    """
    x0 = to_vector(q)
    analytic = grad_objective(kind, q, ds, prior, lam)

    def f(x):
        return objective(kind, from_vector(q.family, q.d, x), ds, prior, lam)

    worst = 0.0
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = step
        g_fd = (f(x0 + e) - f(x0 - e)) / (2.0 * step)
        denom = max(abs(analytic[i]), abs(g_fd))
        err = abs(analytic[i] - g_fd)
        if denom >= 1e-8:
            err = err / denom
        worst = max(worst, err)
    return worst


# -- local optimizer ---------------------------------------------------------------

def local_optimize(kind: str, q0: GaussianMeasure, ds: LabeledDataset,
                   prior: IsotropicPrior, lam: float, budget: int = 200) -> GaussianMeasure:
    """Backtracking gradient descent on the unconstrained parameters.

    Monotone: the returned measure's objective never exceeds the start's.
    Raises NonFiniteObjectiveError when the objective is non-finite at the
    start or the gradient blows up.
    """
    x = to_vector(q0)
    f = objective(kind, q0, ds, prior, lam)
    if not np.isfinite(f):
        raise NonFiniteObjectiveError(f"objective is {f} at the starting point")
    step = 1.0
    for _ in range(budget):
        g = grad_objective(kind, from_vector(q0.family, q0.d, x), ds, prior, lam)
        if not np.all(np.isfinite(g)):
            raise NonFiniteObjectiveError("gradient evaluated non-finite")
        gnorm2 = float(g @ g)
        if gnorm2 < 1e-20:
            break
        accepted = False
        t = step
        for _ in range(60):
            x_new = x - t * g
            f_new = objective(kind, from_vector(q0.family, q0.d, x_new), ds, prior, lam)
            if np.isfinite(f_new) and f_new <= f - 1e-4 * t * gnorm2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        x, f = x_new, f_new
        step = min(t * 2.0, 1e3)
    return from_vector(q0.family, q0.d, x)


# -- deterministic annealing ---------------------------------------------------------

@dataclass(frozen=True)
class AnnealSchedule:
    """Strictly increasing temperature ladder with a per-step optimizer budget."""

    temperatures: tuple
    budget: int = 200

    def __post_init__(self):
        ts = tuple(float(t) for t in self.temperatures)
        if len(ts) < 1:
            raise ConfigError("schedule needs at least one temperature")
        if any(t < 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("temperatures must be nonnegative and strictly increasing")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        object.__setattr__(self, "temperatures", ts)

    @staticmethod
    def geometric(lam: float, steps: int = 10, start_fraction: float = 0.01,
                  budget: int = 200) -> "AnnealSchedule":
        """Default ladder: ``steps`` geometric temperatures from lam*frac to lam."""
        if not (lam > 0 and 0 < start_fraction < 1 and steps >= 1):
            raise ConfigError("need lam > 0, 0 < start_fraction < 1, steps >= 1")
        if steps == 1:
            return AnnealSchedule((lam,), budget)
        ts = lam * start_fraction ** (1.0 - np.arange(steps) / (steps - 1.0))
        ts[-1] = lam
        return AnnealSchedule(tuple(ts), budget)


@dataclass(frozen=True)
class AnnealResult:
    """Best-bound solution of an annealing run, plus the full trace."""

    measure: GaussianMeasure
    lam: float
    trace: tuple            # one BoundReport per visited temperature
    final_measure: GaussianMeasure

    @property
    def bound(self) -> float:
        return min(r.bound for r in self.trace)


def anneal(kind: str, family: str, ds: LabeledDataset, prior: IsotropicPrior,
           schedule: AnnealSchedule, epsilon: float = 0.05) -> AnnealResult:
    """Warm-started optimization along the ladder, tracked by the empirical bound.

    Starts from the exact lambda=0 solution (the prior itself), locally
    optimizes at each temperature from the previous solution, and records
    the empirical bound after each step. Stops early once the bound
    increases; the result carries the best-bound iterate, its temperature,
    one BoundReport per visited temperature, and the last iterate.
    """
    q = GaussianMeasure.from_prior(family, prior)
    trace = []
    best = (math.inf, q, None)
    prev_bound = math.inf
    for lam_t in schedule.temperatures:
        if lam_t > 0:
            q = local_optimize(kind, q, ds, prior, lam_t, schedule.budget)
            report = bd.empirical_bound(kind, q, ds, prior, lam_t, epsilon)
        else:
            # Theorem-style bound undefined at lambda=0; the prior is exact there.
            report = bd.BoundReport(
                expected_empirical_risk=rk.expected_risk(kind, q, ds),
                kl=0.0, rate_value=math.inf, lam=0.0, epsilon=epsilon,
                bound=math.inf, kind=kind, family=family, n=ds.n, d=ds.d)
        trace.append(report)
        if report.bound < best[0]:
            best = (report.bound, q, lam_t)
        if report.bound > prev_bound:
            break
        prev_bound = report.bound
    return AnnealResult(measure=best[1], lam=best[2], trace=tuple(trace),
                        final_measure=q)


# -- convex hinge solver ----------------------------------------------------------

HINGE_FAMILIES = ("fixed", SHARED, DIAG, FULL)


@dataclass(frozen=True)
class HingeCertificate:
    """Guaranteed suboptimality after k iterations of the convex solver.

    ``lipschitz`` is an analytic upper bound on the (sub)gradient norm over
    the feasible set, ``radius`` an upper bound on the start-to-optimum
    distance; ``gap`` = lipschitz * radius / sqrt(1 + k) for the subgradient
    method and 2 * lipschitz * radius^2 / (1 + k)^2 for the smooth
    fixed-variance family.
    """

    family: str
    iterations: int
    lipschitz: float
    radius: float
    gap: float
    method: str
    objective_value: float


def _hinge_pack(family, d):
    """Index bookkeeping for the direct (mean, sigma / Cholesky) vector."""
    if family == "fixed":
        return d, np.array([], dtype=int)
    if family == SHARED:
        return d + 1, np.array([d])
    if family == DIAG:
        return 2 * d, np.arange(d, 2 * d)
    total = d + d + d * (d - 1) // 2
    return total, np.arange(d, 2 * d)   # Cholesky diagonal entries


def _hinge_measure(family, d, n_obs, x):
    m = x[:d]
    if family == "fixed":
        return GaussianMeasure.shared(m, 1.0 / n_obs)
    if family == SHARED:
        return GaussianMeasure.shared(m, x[d] ** 2)
    if family == DIAG:
        return GaussianMeasure.diagonal(m, x[d:] ** 2)
    C = np.zeros((d, d))
    np.fill_diagonal(C, x[d:2 * d])
    i, j = np.tril_indices(d, k=-1)
    C[i, j] = x[2 * d:]
    return GaussianMeasure.full(m, C)


def _hinge_grad(family, ds, prior, lam, x):
    """Subgradient of the hinge objective in the direct parameterization."""
    d = ds.d
    q = _hinge_measure(family, d, ds.n, x)
    g = rk.grad_expected_risk("hinge", q, ds) + grad_kl(q, prior) / lam
    gm = g[:d]
    if family == "fixed":
        return gm
    if family in (SHARED, DIAG):
        sig = x[d:]
        return np.concatenate([gm, g[d:] / sig])   # d/dsigma = d/dlog sigma / sigma
    diag = x[d:2 * d]
    return np.concatenate([gm, g[d:2 * d] / diag, g[2 * d:]])


def _project_ball_halfspaces(z, M, sig_idx, sigma_min):
    """Exact Euclidean projection onto {||x|| <= M, x[sig_idx] >= sigma_min}.

    KKT: x(tau) shrinks by 1/(1+tau) and clips the sigma coordinates; the
    ball multiplier tau solves ||x(tau)|| = M by bisection.
    """
    def shrink(tau):
        x = z / (1.0 + tau)
        if sig_idx.size:
            x[sig_idx] = np.maximum(z[sig_idx] / (1.0 + tau), sigma_min)
        return x

    x = shrink(0.0)
    if np.linalg.norm(x) <= M:
        return x
    lo, hi = 0.0, 1.0
    while np.linalg.norm(shrink(hi)) > M:
        hi *= 2.0
        if hi > 1e18:
            raise ConfigError("projection infeasible: M too small for sigma_min")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(shrink(mid)) > M:
            lo = mid
        else:
            hi = mid
    return shrink(hi)


def hinge_lipschitz_bound(family: str, ds: LabeledDataset, prior: IsotropicPrior,
                          lam: float, M: float, sigma_min: float) -> float:
    """Analytic bound on the objective's subgradient norm over the feasible set.

    Risk part: the mean gradient is an average of -Phi(.) Gamma_i and every
    sigma/Cholesky sensitivity is phi(.) times a quantity at most ||x_i||,
    so (1 + phi(0)) * mean ||x_i|| covers all families. KL part: ||x||/v
    plus the 1/sigma terms at the sigma_min corner.
    """
    row_norms = np.linalg.norm(ds.features, axis=1)
    l_risk = (1.0 + _PHI0) * float(np.mean(row_norms))
    n_sig = 0 if family == "fixed" else (1 if family == SHARED else ds.d)
    l_kl = M / prior.var + math.sqrt(max(n_sig, 1)) / sigma_min * (n_sig > 0)
    return l_risk + l_kl / lam


def hinge_smoothness_bound(ds: LabeledDataset, prior: IsotropicPrior, lam: float) -> float:
    """Gradient-Lipschitz bound for the fixed-variance (sigma^2 = 1/n) family."""
    row_norms = np.linalg.norm(ds.features, axis=1)
    return _PHI0 * math.sqrt(ds.n) * float(np.mean(row_norms)) + 1.0 / (lam * prior.var)


def convex_solve_hinge(ds: LabeledDataset, prior: IsotropicPrior, lam: float,
                       family: str = SHARED, k: int = 1000, radius: float = None,
                       sigma_min: float = 1e-3):
    """Minimize the hinge objective over a ball, with a suboptimality certificate.

    The hinge objective is jointly convex in (mean, sigma) (and in the
    Cholesky factor for the full family). Families "shared", "diag" and
    "full" run k+1 projected subgradient steps (fixed-horizon step size)
    and return the best iterate, certified within
    lipschitz * radius / sqrt(1 + k). Family "fixed" (sigma^2 = 1/n) is
    smooth and runs an accelerated gradient method with a
    2 * L * radius^2 / (1 + k)^2 certificate.
    """
    if family not in HINGE_FAMILIES:
        raise ConfigError(f"family must be one of {HINGE_FAMILIES}")
    rf = bd.RateFunction(bd.HOEFFDING_HINGE, prior_var=prior.var,
                         feature_bound=ds.feature_bound)
    rf.check(lam, ds.n)
    if k < 0:
        raise ConfigError("iteration count must be >= 0")
    d = ds.d
    M = 10.0 * math.sqrt(d) if radius is None else float(radius)
    n_par, sig_idx = _hinge_pack(family, d)
    if sig_idx.size and M <= sigma_min * math.sqrt(sig_idx.size) * 1.01:
        raise ConfigError("radius too small for the sigma_min corner")

    def f(x):
        return objective("hinge", _hinge_measure(family, d, ds.n, x), ds, prior, lam)

    if family == "fixed":
        return _solve_fixed(ds, prior, lam, k, M, f)

    L = hinge_lipschitz_bound(family, ds, prior, lam, M, sigma_min)
    x = _project_ball_halfspaces(np.zeros(n_par), M, sig_idx, sigma_min)
    R = M + float(np.linalg.norm(x))       # start-to-optimum distance bound
    h = R / (L * math.sqrt(k + 1.0))
    # k+1 evaluate-then-step passes: the best of iterates x_0..x_k is certified
    # within L R / sqrt(1+k); k=0 returns the projected start.
    best_f, best_x = math.inf, x.copy()
    for _ in range(k + 1):
        fx = f(x)
        if fx < best_f:
            best_f, best_x = fx, x.copy()
        g = _hinge_grad(family, ds, prior, lam, x)
        x = _project_ball_halfspaces(x - h * g, M, sig_idx, sigma_min)
    cert = HingeCertificate(family=family, iterations=k, lipschitz=L, radius=R,
                            gap=L * R / math.sqrt(1.0 + k), method="subgradient",
                            objective_value=best_f)
    return _hinge_measure(family, d, ds.n, best_x), cert


def _solve_fixed(ds, prior, lam, k, M, f):
    """Accelerated projected gradient over the mean, sigma^2 = 1/n fixed."""
    d = ds.d
    L = hinge_smoothness_bound(ds, prior, lam)

    def grad(m):
        q = GaussianMeasure.shared(m, 1.0 / ds.n)
        g = rk.grad_expected_risk("hinge", q, ds) + grad_kl(q, prior) / lam
        return g[:d]

    def proj(m):
        nrm = np.linalg.norm(m)
        return m if nrm <= M else m * (M / nrm)

    x = np.zeros(d)
    y = x.copy()
    t = 1.0
    best_f, best_x = f(x), x.copy()
    for _ in range(k):
        x_new = proj(y - grad(y) / L)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        fx = f(x)
        if fx < best_f:
            best_f, best_x = fx, x.copy()
    cert = HingeCertificate(family="fixed", iterations=k, lipschitz=L, radius=M,
                            gap=2.0 * L * M * M / (1.0 + k) ** 2, method="accelerated",
                            objective_value=best_f)
    return GaussianMeasure.shared(best_x, 1.0 / ds.n), cert


# -- stochastic gradient descent for ranking ----------------------------------------

@dataclass(frozen=True)
class SgdConfig:
    """Minibatch SGD configuration; step at iteration t is 1 / (t + c)^eta."""

    batch_size: int = 10
    eta: float = 0.9
    c: float = 1.0
    max_iters: int = 1000
    seed: int = 0
    epsilon: float = 0.05
    bound_stride: int = 1
    tol: float = 1e-6
    patience: int = 50

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if not (0.0 < self.eta <= 1.0):
            raise ConfigError("eta must be in (0, 1]")
        if not (self.c > 0):
            raise ConfigError("c must be positive")
        if self.max_iters < 1 or self.bound_stride < 1:
            raise ConfigError("max_iters and bound_stride must be >= 1")

    def step_size(self, t: int) -> float:
        return 1.0 / (t + self.c) ** self.eta


def sgd_rank(ds: LabeledDataset, prior: IsotropicPrior, lam: float, cfg: SgdConfig):
    """Minibatch SGD on the diagonal-family ranking objective.

    Each step samples ``batch_size`` mixed-label pairs uniformly with
    replacement (the full batch enumerates them exactly), forms the
    unbiased objective-gradient estimate, and updates the unconstrained
    parameters. The empirical bound at the fixed Gibbs temperature ``lam``
    is recorded every ``bound_stride`` iterations; the run stops when the
    best recorded bound improves by less than ``tol`` over the last
    ``patience`` records, or at the iteration cap. Bit-reproducible for a
    fixed seed. Returns (measure, trace) with trace entries
    (iteration, BoundReport).
    """
    diffs = rk.mixed_pair_diffs(ds)      # raises NoMixedPairsError when degenerate
    n_pairs = diffs.shape[0]
    rng = np.random.default_rng(cfg.seed)
    q = GaussianMeasure.from_prior(DIAG, prior)
    x = to_vector(q)
    trace = []
    best_history = []
    best = math.inf
    for t in range(cfg.max_iters):
        q = from_vector(DIAG, ds.d, x)
        if t % cfg.bound_stride == 0:
            report = bd.empirical_bound("auc", q, ds, prior, lam, cfg.epsilon)
            trace.append((t, report))
            best = min(best, report.bound)
            best_history.append(best)
            if (len(best_history) > cfg.patience
                    and best_history[-cfg.patience - 1] - best < cfg.tol):
                break
        if cfg.batch_size >= n_pairs:
            g_risk = rk.grad_pair_score_risk(q, diffs)
        else:
            batch = diffs[rng.integers(n_pairs, size=cfg.batch_size)]
            g_risk = rk.grad_pair_score_risk(q, batch)
        x = x - cfg.step_size(t) * (g_risk + grad_kl(q, prior) / lam)
    return from_vector(DIAG, ds.d, x), trace


def write_bound_trace(path, trace):
    """Emit a bound trace as CSV: iteration, expected_risk, kl, bound."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "expected_risk", "kl", "bound"])
        for i, entry in enumerate(trace):
            it, rep = entry if isinstance(entry, tuple) else (i, entry)
            w.writerow([it, repr(rep.expected_empirical_risk), repr(rep.kl),
                        repr(rep.bound)])
