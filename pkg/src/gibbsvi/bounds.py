"""KL divergences, rate functions, and the computable empirical risk bound.

The empirical bound assembles, for a Gaussian measure q, prior
N(0, prior_var * I), temperature lam and confidence eps:

    bound = E_q[empirical risk] + (f(lam, n) + KL(q, prior) + log(1/eps)) / lam

with f the rate function matching the risk kind. Everything here is pure
and thread-safe.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import GaussianMeasure, IsotropicPrior, LabeledDataset
from .errors import ConfigError, DimensionMismatchError, OutOfValidityIntervalError
from .risk import expected_risk

HOEFFDING_CLASSIF = "hoeffding_classif"
HOEFFDING_RANK = "hoeffding_rank"
HOEFFDING_HINGE = "hoeffding_hinge"
BERNSTEIN_CLASSIF = "bernstein_classif"
BERNSTEIN_RANK = "bernstein_rank"

RATE_KINDS = (HOEFFDING_CLASSIF, HOEFFDING_RANK, HOEFFDING_HINGE,
              BERNSTEIN_CLASSIF, BERNSTEIN_RANK)

# risk kind -> rate kind used by the empirical bound
RATE_FOR_RISK = {"01": HOEFFDING_CLASSIF, "auc": HOEFFDING_RANK, "hinge": HOEFFDING_HINGE}


@dataclass(frozen=True)
class RateFunction:
    """A Hoeffding or Bernstein rate function with its validity interval.

    ``prior_var`` and ``feature_bound`` parameterize the hinge rate;
    ``margin_c`` is the (user-supplied) margin constant of the Bernstein
    rates, not estimable from data.
    """

    kind: str
    prior_var: float = None
    feature_bound: float = None
    margin_c: float = 1.0

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ConfigError(f"unknown rate kind {self.kind!r}")
        if self.kind == HOEFFDING_HINGE:
            if self.prior_var is None or self.feature_bound is None:
                raise ConfigError("hinge rate needs prior_var and feature_bound")
            if not (self.prior_var > 0) or self.feature_bound < 0:
                raise ConfigError("hinge rate needs prior_var > 0, feature_bound >= 0")

    def max_lambda(self, n: int) -> float:
        """Supremum of the open validity interval (inf if unconstrained)."""
        if self.kind == HOEFFDING_HINGE:
            if self.feature_bound == 0:
                return math.inf
            return (2.0 / self.feature_bound) * math.sqrt(n / self.prior_var)
        if self.kind == BERNSTEIN_CLASSIF:
            return 2.0 * n
        if self.kind == BERNSTEIN_RANK:
            return (n - 1) / 4.0
        return math.inf

    def check(self, lam: float, n: int):
        if not (lam > 0):
            raise OutOfValidityIntervalError(f"lambda must be positive, got {lam}")
        if n < 2:
            raise ConfigError("rate functions need n >= 2")
        if lam >= self.max_lambda(n):
            raise OutOfValidityIntervalError(
                f"lambda={lam} outside validity interval (0, {self.max_lambda(n)}) "
                f"of {self.kind}")


def rate_f(rf: RateFunction, lam: float, n: int) -> float:
    """Hoeffding rate f(lambda, n) for the given kind."""
    rf.check(lam, n)
    if rf.kind == HOEFFDING_CLASSIF:
        return lam * lam / (2.0 * n)
    if rf.kind == HOEFFDING_RANK:
        return lam * lam / (n - 1.0)
    if rf.kind == HOEFFDING_HINGE:
        arg = 1.0 - rf.prior_var * lam * lam * rf.feature_bound ** 2 / (4.0 * n)
        return lam * lam / (4.0 * n) - 0.5 * math.log(arg)
    raise ConfigError(f"{rf.kind} is not a Hoeffding rate")


def rate_g(rf: RateFunction, lam: float, n: int) -> float:
    """Bernstein rate g(lambda, n) for the given kind."""
    rf.check(lam, n)
    if rf.kind == BERNSTEIN_CLASSIF:
        return rf.margin_c * lam * lam / (2.0 * n - lam)
    if rf.kind == BERNSTEIN_RANK:
        return rf.margin_c * lam * lam / (n - 1.0 - 4.0 * lam)
    raise ConfigError(f"{rf.kind} is not a Bernstein rate")


def kl_to_prior(q: GaussianMeasure, prior: IsotropicPrior, form: str = "exact") -> float:
    """KL divergence of q = N(m, Sigma) from the isotropic prior.

    exact form (the one the empirical bound requires):
        (tr(Sigma)/v + ||m||^2/v - d + d log v - log det Sigma) / 2,  v = prior.var.

    form="doubled" reproduces, for comparison only, the display that doubles
    the variance-ratio and mean terms relative to the exact divergence.
    """
    if q.d != prior.dim:
        raise DimensionMismatchError(f"measure dim {q.d} != prior dim {prior.dim}")
    v = prior.var
    d = q.d
    fit = q.trace_cov() / v + float(q.mean @ q.mean) / v
    shape = -d + d * math.log(v) - q.logdet_cov()
    if form == "exact":
        return 0.5 * (fit + shape)
    if form == "doubled":
        return fit + 0.5 * shape
    raise ConfigError(f"unknown KL form {form!r}")


@dataclass(frozen=True)
class BoundReport:
    """The assembled empirical bound and its ingredients."""

    expected_empirical_risk: float
    kl: float
    rate_value: float
    lam: float
    epsilon: float
    bound: float
    kind: str = ""
    family: str = ""
    n: int = 0
    d: int = 0

    def to_dict(self) -> dict:
        return {
            "expected_empirical_risk": self.expected_empirical_risk,
            "kl": self.kl,
            "rate_value": self.rate_value,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "bound": self.bound,
            "metadata": {"kind": self.kind, "family": self.family,
                         "n": self.n, "d": self.d},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def assemble_bound(risk_value: float, kl: float, rate_value: float,
                   lam: float, epsilon: float) -> float:
    return risk_value + (rate_value + kl + math.log(1.0 / epsilon)) / lam


def empirical_bound(kind: str, q: GaussianMeasure, ds: LabeledDataset,
                    prior: IsotropicPrior, lam: float, epsilon: float) -> BoundReport:
    """High-probability upper bound on the integrated true risk under q.

    ``kind`` selects both the expected empirical risk and the matching rate
    function ("01" / "hinge" / "auc").
    """
    if not (0.0 < epsilon < 1.0):
        raise ConfigError(f"epsilon must be in (0, 1), got {epsilon}")
    if kind not in RATE_FOR_RISK:
        raise ConfigError(f"unknown risk kind {kind!r}")
    rf = RateFunction(RATE_FOR_RISK[kind], prior_var=prior.var,
                      feature_bound=ds.feature_bound)
    f_val = rate_f(rf, lam, ds.n)
    risk_value = expected_risk(kind, q, ds)
    kl = kl_to_prior(q, prior)
    return BoundReport(
        expected_empirical_risk=risk_value, kl=kl, rate_value=f_val,
        lam=lam, epsilon=epsilon,
        bound=assemble_bound(risk_value, kl, f_val, lam, epsilon),
        kind=kind, family=q.family, n=ds.n, d=ds.d)


RECOMMENDED_SETTINGS = ("classif01", "hinge", "rank01", "classifMargin", "rankMargin")


def recommended_lambda(setting: str, n: int, d: int = None, prior_var: float = None,
                       feature_bound: float = None, margin_c: float = 1.0) -> float:
    """Closed-form temperature recommendations per learning setting.

    classif01: sqrt(n d); hinge: (1/c_x) sqrt(n / prior_var);
    rank01: sqrt(d (n-1) / 2); classifMargin: 2n/(C+2); rankMargin: (n-1)/(C+5).
    """
    if n < 2:
        raise ConfigError("need n >= 2")
    if setting == "classif01":
        _need(d=d)
        return math.sqrt(n * d)
    if setting == "hinge":
        _need(prior_var=prior_var, feature_bound=feature_bound)
        if feature_bound <= 0:
            raise ConfigError("hinge recommendation needs feature_bound > 0")
        return math.sqrt(n / prior_var) / feature_bound
    if setting == "rank01":
        _need(d=d)
        return math.sqrt(d * (n - 1) / 2.0)
    if setting == "classifMargin":
        return 2.0 * n / (margin_c + 2.0)
    if setting == "rankMargin":
        return (n - 1.0) / (margin_c + 5.0)
    raise ConfigError(f"unknown setting {setting!r}; choose from {RECOMMENDED_SETTINGS}")


def _need(**kwargs):
    for name, value in kwargs.items():
        if value is None or (np.isscalar(value) and not (value > 0)):
            raise ConfigError(f"recommended_lambda needs positive {name}")
