"""Domain types and probability kernels for the abundance state-space model.

The latent process is a trend-anchored Gompertz autoregression on daily
log-abundance, observed through effort-scaled Poisson counts on a subset of
days.  Which days are observed may itself depend on total abundance through a
probit threshold layer; the kernels for all three pieces live here and are
shared by the forward simulator and the MCMC engine.

Conventions: study days are numbered 1..N in function arguments named ``day``;
all arrays are indexed 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaln

# Probit probabilities are clamped so downstream log-likelihoods stay finite;
# the threshold Metropolis step walks deep into the tails.
PHI_FLOOR = 1e-300
PHI_CEIL = 1.0 - 1e-16


def norm_cdf(x):
    """Standard normal CDF via the complementary error function.

    Accurate to better than 1e-12 relative error on [-8, 8]; values outside
    are clamped to [1e-300, 1 - 1e-16] so that log(p) and log(1 - p) remain
    finite.
    """
    x = np.asarray(x, dtype=float)
    p = 0.5 * erfc(-x / math.sqrt(2.0))
    return np.clip(p, PHI_FLOOR, PHI_CEIL) if p.ndim else float(min(max(p, PHI_FLOOR), PHI_CEIL))


def _as_2d(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got ndim={a.ndim}")
    return a


def _check_spd(m, name):
    m = _as_2d(m, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None
    return m


@dataclass
class CovariateSeries:
    """Daily design matrix driving the abundance trend.

    ``values`` has one row per study day and one column per covariate; the
    first column is the constant intercept.  ``day_index`` carries the
    calendar-day identifiers used in CSV interchange.  ``warmup_days`` flags
    how many leading days were computed from a shortened smoothing window so
    analyses can drop them.
    """

    values: np.ndarray
    day_index: np.ndarray
    names: list[str] = field(default_factory=list)
    warmup_days: int = 0
    dates: list[str] | None = None

    def __post_init__(self):
        self.values = _as_2d(self.values, "values")
        self.day_index = np.asarray(self.day_index, dtype=int)
        if self.values.shape[0] < 2:
            raise ValueError("covariate series needs at least 2 days")
        if self.day_index.shape != (self.values.shape[0],):
            raise ValueError("day_index length must match number of rows")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("covariate values must be finite")
        if not np.allclose(self.values[:, 0], 1.0):
            raise ValueError("first covariate column must be the intercept (all 1.0)")
        if not self.names:
            self.names = ["intercept"] + [f"x{i}" for i in range(1, self.values.shape[1])]
        if len(self.names) != self.values.shape[1]:
            raise ValueError("names length must match number of columns")
        if self.dates is not None and len(self.dates) != self.values.shape[0]:
            raise ValueError("dates length must match number of rows")

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.values.shape[1]


@dataclass
class LatentState:
    """Log-abundance for every species on every study day (J x N).

    The process exists on all days, observed or not; entries must be finite
    so that abundance exp(entry) is strictly positive.
    """

    log_lambda: np.ndarray

    def __post_init__(self):
        self.log_lambda = _as_2d(self.log_lambda, "log_lambda")
        if not np.all(np.isfinite(self.log_lambda)):
            raise ValueError("log_lambda entries must be finite")

    @property
    def n_species(self) -> int:
        return self.log_lambda.shape[0]

    @property
    def n_days(self) -> int:
        return self.log_lambda.shape[1]

    def abundance(self) -> np.ndarray:
        return np.exp(self.log_lambda)

    def total_abundance(self) -> np.ndarray:
        """Per-day abundance summed over species (length N)."""
        return np.exp(self.log_lambda).sum(axis=0)


@dataclass
class ModelParams:
    """Every unknown of the hierarchy in one bag.

    ``alpha`` holds the per-species autoregressive coefficients, ``beta`` the
    J x p trend coefficients, ``theta`` the two probit coefficients of the
    observation-day layer, ``lambda_tilde`` its abundance threshold and ``z``
    the per-day probit augmentation variables.
    """

    alpha: np.ndarray
    beta: np.ndarray
    sigma2: float
    theta: np.ndarray
    lambda_tilde: float
    mu_beta: np.ndarray
    sigma_beta: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.beta = _as_2d(self.beta, "beta")
        self.theta = np.asarray(self.theta, dtype=float)
        self.mu_beta = np.atleast_1d(np.asarray(self.mu_beta, dtype=float))
        self.sigma_beta = _as_2d(self.sigma_beta, "sigma_beta")
        self.z = np.atleast_1d(np.asarray(self.z, dtype=float))
        self.sigma2 = float(self.sigma2)
        self.lambda_tilde = float(self.lambda_tilde)
        j, p = self.beta.shape
        if self.alpha.shape != (j,):
            raise ValueError("alpha must have one entry per species")
        if self.theta.shape != (2,):
            raise ValueError("theta must be a pair")
        if self.mu_beta.shape != (p,):
            raise ValueError("mu_beta must have one entry per covariate")
        if self.sigma_beta.shape != (p, p):
            raise ValueError("sigma_beta must be p x p")

    @property
    def n_species(self) -> int:
        return self.beta.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.beta.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            sigma2=self.sigma2,
            theta=self.theta.copy(),
            lambda_tilde=self.lambda_tilde,
            mu_beta=self.mu_beta.copy(),
            sigma_beta=self.sigma_beta.copy(),
            z=self.z.copy(),
        )


def validate_params(params: ModelParams, obs: "ObservationSet | None" = None,
                    require_stationary: bool = True) -> None:
    """Check the invariants a legal parameter state must satisfy.

    Raises ValueError on the first violation.  ``require_stationary`` enforces
    |alpha_j| < 1 (density dependence); pass False when the autoregressive
    truncation has been disabled.  With ``obs`` given, also checks that the
    sign of each augmentation variable agrees with its observation indicator.
    """
    if not params.sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if not params.lambda_tilde > 0:
        raise ValueError("lambda_tilde must be positive")
    _check_spd(params.sigma_beta, "sigma_beta")
    if require_stationary and np.any(np.abs(params.alpha) >= 1.0):
        raise ValueError("|alpha_j| < 1 required for a density-dependent process")
    for name in ("alpha", "beta", "theta", "mu_beta", "z"):
        if not np.all(np.isfinite(getattr(params, name))):
            raise ValueError(f"{name} must be finite")
    if obs is not None:
        if params.z.shape != obs.tau.shape:
            raise ValueError("z length must match tau length")
        pos = params.z > 0
        if not np.array_equal(pos, obs.tau.astype(bool)):
            raise ValueError("sign of z must agree with tau (z > 0 iff tau = 1)")


@dataclass
class Hyperpriors:
    """Fixed prior settings for every level of the hierarchy.

    Defaults are weakly informative: diffuse initial state and trend-mean
    priors, unit-scale prior on the autoregression, a probit-coefficient
    scale of 2 so prior inclusion probabilities are near-uniform, and a
    gamma threshold prior whose mean is set from the data via
    :func:`default_hyperpriors`.
    """

    mu1: np.ndarray
    sigma2_1: float
    mu0: np.ndarray
    Sigma0: np.ndarray
    Psi: np.ndarray
    nu: float
    mu_alpha: np.ndarray
    sigma2_alpha: float
    mu_theta: np.ndarray
    Sigma_theta: np.ndarray
    q: float
    r: float
    alpha_lambda: float
    beta_lambda: float

    def __post_init__(self):
        self.mu1 = np.atleast_1d(np.asarray(self.mu1, dtype=float))
        self.mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        self.mu_alpha = np.atleast_1d(np.asarray(self.mu_alpha, dtype=float))
        self.mu_theta = np.asarray(self.mu_theta, dtype=float)
        p = self.mu0.shape[0]
        self.Sigma0 = _check_spd(self.Sigma0, "Sigma0")
        self.Psi = _check_spd(self.Psi, "Psi")
        self.Sigma_theta = _check_spd(self.Sigma_theta, "Sigma_theta")
        if self.Sigma0.shape != (p, p) or self.Psi.shape != (p, p):
            raise ValueError("Sigma0 and Psi must be p x p")
        if self.Sigma_theta.shape != (2, 2) or self.mu_theta.shape != (2,):
            raise ValueError("theta prior must be bivariate")
        for name in ("sigma2_1", "sigma2_alpha", "q", "r", "alpha_lambda", "beta_lambda"):
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.nu > p - 1:
            raise ValueError("nu must exceed p - 1")


def default_hyperpriors(n_species: int, n_covariates: int,
                        max_total_count: float | None = None) -> Hyperpriors:
    """Weakly-informative defaults; all fields overridable afterwards.

    The gamma threshold prior gets mean alpha/beta equal to 10% of the
    largest observed per-day total count when one is supplied.
    """
    p = n_covariates
    if max_total_count is not None and max_total_count > 0:
        beta_lambda = 2.0 / (0.1 * float(max_total_count))
    else:
        beta_lambda = 0.2  # prior mean 10 when no counts are available
    return Hyperpriors(
        mu1=np.zeros(n_species),
        sigma2_1=100.0,
        mu0=np.zeros(p),
        Sigma0=100.0 * np.eye(p),
        Psi=np.eye(p),
        nu=float(p + 2),
        mu_alpha=np.zeros(n_species),
        sigma2_alpha=1.0,
        mu_theta=np.zeros(2),
        Sigma_theta=4.0 * np.eye(2),
        q=2.0,
        r=0.1,
        alpha_lambda=2.0,
        beta_lambda=beta_lambda,
    )


@dataclass
class ObservationSet:
    """Counts and effort on the observed days plus the full indicator vector.

    ``tau`` has one 0/1 entry per study day; ``observed_days`` holds the
    0-based day positions where tau is 1, strictly increasing.  ``counts`` is
    J x n over the observed days only.  When both ``trap_fraction`` and
    ``duration_days`` are present, effort must equal their product.
    """

    tau: np.ndarray
    observed_days: np.ndarray
    counts: np.ndarray
    effort: np.ndarray
    trap_fraction: np.ndarray | None = None
    duration_days: np.ndarray | None = None
    day_index: np.ndarray | None = None

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=int)
        self.observed_days = np.asarray(self.observed_days, dtype=int)
        self.counts = np.asarray(self.counts)
        self.effort = np.atleast_1d(np.asarray(self.effort, dtype=float))
        if self.counts.ndim != 2:
            raise ValueError("counts must be J x n")
        n = self.observed_days.shape[0]
        if not np.all((self.tau == 0) | (self.tau == 1)):
            raise ValueError("tau must be binary")
        if int(self.tau.sum()) != n:
            raise ValueError("sum(tau) must equal the number of observed days")
        if n and (np.any(self.observed_days < 0) or np.any(self.observed_days >= self.tau.size)):
            raise ValueError("observed_days out of range")
        if n and np.any(np.diff(self.observed_days) <= 0):
            raise ValueError("observed_days must be strictly increasing")
        if n and not np.all(self.tau[self.observed_days] == 1):
            raise ValueError("tau must be 1 exactly on observed_days")
        marked = np.zeros_like(self.tau)
        marked[self.observed_days] = 1
        if not np.array_equal(marked, self.tau):
            raise ValueError("tau must be 0 off observed_days")
        if self.counts.shape[1] != n:
            raise ValueError("counts must have one column per observed day")
        if not np.issubdtype(self.counts.dtype, np.integer):
            as_int = np.asarray(self.counts)
            if not np.all(as_int == np.floor(as_int)):
                raise ValueError("counts must be integers")
            self.counts = as_int.astype(np.int64)
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if self.effort.shape != (n,):
            raise ValueError("effort must have one entry per observed day")
        if n and not np.all(self.effort > 0):
            raise ValueError("effort must be strictly positive")
        for name in ("trap_fraction", "duration_days"):
            v = getattr(self, name)
            if v is not None:
                v = np.atleast_1d(np.asarray(v, dtype=float))
                if v.shape != (n,) or (n and not np.all(v > 0)):
                    raise ValueError(f"{name} must be positive with one entry per observed day")
                setattr(self, name, v)
        if self.trap_fraction is not None and self.duration_days is not None:
            if n and np.max(np.abs(self.effort - self.trap_fraction * self.duration_days)) > 1e-12:
                raise ValueError("effort must equal trap_fraction * duration_days")
        if self.day_index is not None:
            self.day_index = np.asarray(self.day_index, dtype=int)
            if self.day_index.shape != self.tau.shape:
                raise ValueError("day_index must have one entry per study day")

    @property
    def n_days(self) -> int:
        return self.tau.shape[0]

    @property
    def n_observed(self) -> int:
        return self.observed_days.shape[0]

    @property
    def n_species(self) -> int:
        return self.counts.shape[0]


def check_alignment(obs: ObservationSet, covariates: CovariateSeries) -> None:
    """Observations and covariates must cover the same study days."""
    if obs.n_days != covariates.n_days:
        raise ValueError(
            f"observation span ({obs.n_days} days) does not match "
            f"covariate span ({covariates.n_days} days)"
        )
    if obs.day_index is not None and not np.array_equal(obs.day_index, covariates.day_index):
        raise ValueError("observation day identifiers do not match covariate day identifiers")


# ---------------------------------------------------------------------------
# probability kernels
# ---------------------------------------------------------------------------

def process_mean(params: ModelParams, covariates: CovariateSeries,
                 prev_log_lambda: np.ndarray, day: int) -> np.ndarray:
    """Conditional mean of log-abundance on study day ``day`` (1-based, >= 2).

    Per species j the mean is beta_j x(t) - alpha_j beta_j x(t-1) +
    alpha_j * prev_log_lambda_j: the trend value plus the discounted anomaly
    carried over from the previous day.
    """
    if not 2 <= day <= covariates.n_days:
        raise IndexError(f"day must be in [2, {covariates.n_days}], got {day}")
    prev = np.atleast_1d(np.asarray(prev_log_lambda, dtype=float))
    if prev.shape != (params.n_species,):
        raise ValueError("prev_log_lambda must have one entry per species")
    if not np.all(np.isfinite(prev)):
        raise ValueError("prev_log_lambda must be finite")
    x_now = covariates.values[day - 1]
    x_prev = covariates.values[day - 2]
    trend_now = params.beta @ x_now
    trend_prev = params.beta @ x_prev
    return trend_now - params.alpha * trend_prev + params.alpha * prev


def process_logdensity(state: LatentState, params: ModelParams,
                       covariates: CovariateSeries, hyper: Hyperpriors) -> float:
    """Joint log-density of the latent path under the autoregression.

    Sums the initial-day Gaussian (mean mu1, variance sigma2_1) and the N-1
    one-step transition terms.  The covariates must cover at least as many
    days as the state; a single-day state contributes the initial term only.
    """
    ll = state.log_lambda
    j, n = ll.shape
    if j != params.n_species:
        raise ValueError("state and params disagree on species count")
    if n > covariates.n_days:
        raise ValueError("covariates must cover every day of the state")
    if hyper.mu1.shape != (j,):
        raise ValueError("mu1 must have one entry per species")
    out = float(
        -0.5 * j * math.log(2.0 * math.pi * hyper.sigma2_1)
        - 0.5 * np.sum((ll[:, 0] - hyper.mu1) ** 2) / hyper.sigma2_1
    )
    if n == 1:
        return out
    x = covariates.values[:n]
    trend = params.beta @ x.T                      # (J, n)
    mean = trend[:, 1:] - params.alpha[:, None] * trend[:, :-1] \
        + params.alpha[:, None] * ll[:, :-1]
    resid = ll[:, 1:] - mean
    out += float(
        -0.5 * j * (n - 1) * math.log(2.0 * math.pi * params.sigma2)
        - 0.5 * np.sum(resid ** 2) / params.sigma2
    )
    return out


def observation_logdensity(counts_k: np.ndarray, lambda_k: np.ndarray,
                           effort_k: float) -> float:
    """Poisson log-likelihood of one observed day across species.

    The rate for species j is lambda_j times the day's effort offset; the
    factorial term uses log-gamma so large counts stay finite.
    """
    y = np.atleast_1d(np.asarray(counts_k))
    lam = np.atleast_1d(np.asarray(lambda_k, dtype=float))
    effort_k = float(effort_k)
    if effort_k <= 0:
        raise ValueError("effort must be strictly positive")
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValueError("abundance rates must be finite and strictly positive")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("counts must be non-negative integers")
    rate = lam * effort_k
    return float(np.sum(y * np.log(rate) - rate - gammaln(y + 1.0)))


def inclusion_probability(theta: np.ndarray, total_abundance: float,
                          lambda_tilde: float) -> float:
    """Probability that a day is observed given total abundance.

    Probit of theta0 + theta1 * [total_abundance >= lambda_tilde]; the
    indicator is closed at equality.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (2,):
        raise ValueError("theta must be a pair")
    vals = [float(total_abundance), float(lambda_tilde), float(theta[0]), float(theta[1])]
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("inputs must be finite")
    ind = 1.0 if total_abundance >= lambda_tilde else 0.0
    return float(norm_cdf(theta[0] + theta[1] * ind))
