"""Metropolis-within-Gibbs sampler for the hierarchical abundance model.

Conjugate blocks (probit augmentation variables, probit coefficients, trend
coefficients and their hierarchy, autoregression, process variance) are drawn
from closed-form conditionals.  The latent log-abundance path and the
abundance threshold have no conjugate form and use random-walk Metropolis:
the path via a single-site sweep (vectorised over the two parity classes of
days, which are conditionally independent given each other), the threshold
via a log-scale random walk.

The non-preferential variant omits the observation-day layer entirely: no
augmentation draws, no probit coefficients, no threshold, and no
inclusion-pressure term in the path update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from . import diagnostics
from .core import (
    CovariateSeries,
    Hyperpriors,
    LatentState,
    ModelParams,
    ObservationSet,
    check_alignment,
    default_hyperpriors,
)

PREFERENTIAL = "preferential"
NON_PREFERENTIAL = "non_preferential"

_CHAIN_STREAM = 201
_TARGET_ACCEPT = 0.44
_LOG_SD_MIN, _LOG_SD_MAX = math.log(1e-3), math.log(1e3)
_PROB_FLOOR = 1e-300


class NumericalAbortError(RuntimeError):
    """A chain produced a non-finite value; carries iteration and block name."""


@dataclass
class McmcConfig:
    """Run-length, variant and proposal settings for one fit.

    Desk-scale defaults (50k iterations, 20k burn-in, thin 10) finish in
    minutes; longer protocols are a config change.  ``truncate_alpha``
    restricts the autoregression to (-1, 1); ``state_stride`` additionally
    thins the stored latent-path snapshots to bound memory.
    """

    n_iterations: int = 50_000
    burn_in: int = 20_000
    thin: int = 10
    model_variant: str = PREFERENTIAL
    proposal_sd_loglambda: float = 0.5
    proposal_sd_lambda_tilde: float = 0.5
    adapt: bool = True
    seed: int = 0
    n_chains: int = 1
    truncate_alpha: bool = True
    state_stride: int = 1

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be positive")
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("burn_in must be in [0, n_iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.model_variant not in (PREFERENTIAL, NON_PREFERENTIAL):
            raise ValueError(f"unknown model_variant {self.model_variant!r}")
        if self.proposal_sd_loglambda <= 0 or self.proposal_sd_lambda_tilde <= 0:
            raise ValueError("proposal standard deviations must be positive")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.state_stride < 1:
            raise ValueError("state_stride must be >= 1")

    @property
    def preferential(self) -> bool:
        return self.model_variant == PREFERENTIAL

    @property
    def draws_per_chain(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws from all chains, plus run metadata.

    Scalar blocks are stacked along the first axis in storage order; the
    latent path is kept at ``state_stride`` spacing.  ``theta``,
    ``lambda_tilde`` and ``z`` are None for the non-preferential variant.
    """

    variant: str
    iteration: np.ndarray
    chain: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    mu_beta: np.ndarray
    sigma_beta: np.ndarray
    theta: np.ndarray | None
    lambda_tilde: np.ndarray | None
    z: np.ndarray | None
    loglambda: np.ndarray
    loglambda_iteration: np.ndarray
    loglambda_chain: np.ndarray
    acceptance: dict[str, float]
    diagnostics: dict[str, tuple[float, float]]
    config: McmcConfig
    day_index: np.ndarray

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    @property
    def preferential(self) -> bool:
        return self.variant == PREFERENTIAL

    def params_at(self, k: int) -> ModelParams:
        """Rebuild the k-th stored parameter snapshot.

        Non-preferential draws never updated the observation-day layer, so
        its fields come back as neutral placeholders.
        """
        n = self.day_index.shape[0]
        return ModelParams(
            alpha=self.alpha[k].copy(),
            beta=self.beta[k].copy(),
            sigma2=float(self.sigma2[k]),
            theta=self.theta[k].copy() if self.theta is not None else np.zeros(2),
            lambda_tilde=float(self.lambda_tilde[k]) if self.lambda_tilde is not None else 1.0,
            mu_beta=self.mu_beta[k].copy(),
            sigma_beta=self.sigma_beta[k].copy(),
            z=self.z[k].copy() if self.z is not None else np.zeros(n),
        )


# ---------------------------------------------------------------------------
# truncated-normal and inverse-Wishart primitives
# ---------------------------------------------------------------------------

def _truncnorm_signed(mean, sign, rng):
    """Draw from N(mean, 1) truncated to (0, inf) where sign=+1 and to
    (-inf, 0] where sign=-1, by tail-stable inverse CDF."""
    v = rng.random(np.shape(mean))
    p = np.maximum(v * ndtr(sign * mean), _PROB_FLOOR)
    return mean - sign * ndtri(p)


def _truncnorm_interval(mean, sd, lo, hi, rng):
    """Scalar draw from N(mean, sd^2) truncated to (lo, hi)."""
    a = ndtr((lo - mean) / sd)
    b = ndtr((hi - mean) / sd)
    if b - a < 1e-14:
        # posterior mass essentially outside the interval: pin to the nearer edge
        eps = 1e-9 * (hi - lo)
        return lo + eps if mean <= lo else hi - eps
    p = min(max(a + rng.random() * (b - a), _PROB_FLOOR), 1.0 - 1e-16)
    return mean + sd * ndtri(p)


def _inv_sym(m: np.ndarray) -> np.ndarray:
    """Inverse of a small symmetric positive-definite matrix (2x2 fast path)."""
    if m.shape[0] == 2:
        a, b, d = m[0, 0], m[0, 1], m[1, 1]
        det = a * d - b * b
        return np.array([[d, -b], [-b, a]]) / det
    return np.linalg.inv(m)


_BARTLETT_IDX: dict[int, tuple] = {}


def sample_invwishart(rng: np.random.Generator, df: float, scale: np.ndarray) -> np.ndarray:
    """Inverse-Wishart draw via a Bartlett-decomposed Wishart on the inverse scale."""
    p = scale.shape[0]
    if df <= p - 1:
        raise ValueError("inverse-Wishart needs df > p - 1")
    idx = _BARTLETT_IDX.get(p)
    if idx is None:
        idx = (np.diag_indices(p), np.tril_indices(p, -1))
        _BARTLETT_IDX[p] = idx
    diag_idx, tril_idx = idx
    chol_inv_scale = np.linalg.cholesky(_inv_sym(scale))
    a = np.zeros((p, p))
    a[diag_idx] = np.sqrt(rng.chisquare(df - np.arange(p)))
    if p > 1:
        a[tril_idx] = rng.standard_normal(p * (p - 1) // 2)
    la = chol_inv_scale @ a
    w = la @ la.T
    return _inv_sym(w)


def _mvn_draw(mean, cov, rng):
    return mean + np.linalg.cholesky(cov) @ rng.standard_normal(mean.shape[0])


# ---------------------------------------------------------------------------
# conjugate full-conditional updates
# ---------------------------------------------------------------------------

def update_z(state: LatentState, params: ModelParams, obs: ObservationSet,
             rng: np.random.Generator, total: np.ndarray | None = None) -> np.ndarray:
    """Probit augmentation draws, one per day.

    The mean is theta0 + theta1 * [total abundance >= threshold]; the sign is
    pinned to the day's observation indicator.
    """
    if total is None:
        total = state.total_abundance()
    d = (total >= params.lambda_tilde).astype(float)
    mean = params.theta[0] + params.theta[1] * d
    sign = np.where(obs.tau == 1, 1.0, -1.0)
    return _truncnorm_signed(mean, sign, rng)


def update_theta(z: np.ndarray, state: LatentState, params: ModelParams,
                 hyper: Hyperpriors, rng: np.random.Generator,
                 total: np.ndarray | None = None,
                 prior_prec: np.ndarray | None = None) -> np.ndarray:
    """Bivariate-normal draw for the probit coefficients given z.

    Probit regression of z on (1, indicator) with unit residual variance is
    an ordinary conjugate Gaussian regression.
    """
    if total is None:
        total = state.total_abundance()
    if prior_prec is None:
        prior_prec = _inv_sym(hyper.Sigma_theta)
    d = total >= params.lambda_tilde
    n = float(d.shape[0])
    s1 = float(d.sum())
    dtd = np.array([[n, s1], [s1, s1]])
    dtz = np.array([float(z.sum()), float(z[d].sum())])
    prec = prior_prec + dtd
    cov = _inv_sym(prec)
    mean = cov @ (prior_prec @ hyper.mu_theta + dtz)
    # hand-rolled 2x2 lower Cholesky of the posterior covariance
    l00 = math.sqrt(cov[0, 0])
    l10 = cov[0, 1] / l00
    l11 = math.sqrt(cov[1, 1] - l10 * l10)
    e0, e1 = rng.standard_normal(2)
    return np.array([mean[0] + l00 * e0, mean[1] + l10 * e0 + l11 * e1])


def update_beta(state: LatentState, params: ModelParams, covariates: CovariateSeries,
                hyper: Hyperpriors, rng: np.random.Generator,
                prior_prec: np.ndarray | None = None) -> np.ndarray:
    """Conjugate draw of each species' trend coefficients.

    Quasi-differencing by alpha_j turns the autoregression into a Gaussian
    regression of log-abundance increments on covariate increments.
    """
    x = covariates.values
    ll = state.log_lambda
    if prior_prec is None:
        prior_prec = _inv_sym(params.sigma_beta)
    prior_term = prior_prec @ params.mu_beta
    out = np.empty_like(params.beta)
    for j in range(params.n_species):
        a = params.alpha[j]
        v = x[1:] - a * x[:-1]
        resp = ll[j, 1:] - a * ll[j, :-1]
        prec = prior_prec + (v.T @ v) / params.sigma2
        cov = _inv_sym(prec)
        mean = cov @ (prior_term + (v.T @ resp) / params.sigma2)
        out[j] = _mvn_draw(mean, cov, rng)
    return out


def update_alpha(state: LatentState, params: ModelParams, covariates: CovariateSeries,
                 hyper: Hyperpriors, rng: np.random.Generator,
                 truncate: bool = True) -> np.ndarray:
    """Scalar-normal draw of each autoregressive coefficient.

    Regresses each day's trend anomaly on the previous day's; the draw is
    restricted to (-1, 1) by inverse CDF unless ``truncate`` is off.
    """
    trend = params.beta @ covariates.values.T
    anom = state.log_lambda - trend
    out = np.empty_like(params.alpha)
    for j in range(params.n_species):
        prev = anom[j, :-1]
        cur = anom[j, 1:]
        prec = 1.0 / hyper.sigma2_alpha + (prev @ prev) / params.sigma2
        mean = (hyper.mu_alpha[j] / hyper.sigma2_alpha + (prev @ cur) / params.sigma2) / prec
        sd = math.sqrt(1.0 / prec)
        if truncate:
            out[j] = _truncnorm_interval(mean, sd, -1.0, 1.0, rng)
        else:
            out[j] = mean + sd * rng.standard_normal()
    return out


def update_sigma2(state: LatentState, params: ModelParams, covariates: CovariateSeries,
                  hyper: Hyperpriors, rng: np.random.Generator) -> float:
    """Inverse-gamma draw for the process variance from the one-step residuals.

    The day-1 term has its own fixed variance and stays out of the sum.
    """
    ll = state.log_lambda
    j, n = ll.shape
    trend = params.beta @ covariates.values.T
    mean = trend[:, 1:] - params.alpha[:, None] * trend[:, :-1] \
        + params.alpha[:, None] * ll[:, :-1]
    ssr = float(np.sum((ll[:, 1:] - mean) ** 2))
    shape = hyper.q + j * (n - 1) / 2.0
    rate = hyper.r + ssr / 2.0
    return float(rate / rng.gamma(shape))


def update_mu_beta(params: ModelParams, hyper: Hyperpriors,
                   rng: np.random.Generator,
                   sb_inv: np.ndarray | None = None,
                   prior_prec: np.ndarray | None = None) -> np.ndarray:
    """Gaussian draw for the trend-coefficient mean given the J species rows."""
    j = params.n_species
    if sb_inv is None:
        sb_inv = _inv_sym(params.sigma_beta)
    if prior_prec is None:
        prior_prec = _inv_sym(hyper.Sigma0)
    prec = prior_prec + j * sb_inv
    cov = _inv_sym(prec)
    mean = cov @ (prior_prec @ hyper.mu0 + sb_inv @ params.beta.sum(axis=0))
    return _mvn_draw(mean, cov, rng)


def update_sigma_beta(params: ModelParams, hyper: Hyperpriors,
                      rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw for the trend-coefficient covariance."""
    dev = params.beta - params.mu_beta[None, :]
    scale = hyper.Psi + dev.T @ dev
    return sample_invwishart(rng, hyper.nu + params.n_species, scale)


def update_beta_hyper(params: ModelParams, hyper: Hyperpriors,
                      rng: np.random.Generator):
    """Mean then covariance of the trend-coefficient prior, in that order."""
    mu = update_mu_beta(params, hyper, rng)
    tmp = replace(params, mu_beta=mu)
    sigma = update_sigma_beta(tmp, hyper, rng)
    return mu, sigma


# ---------------------------------------------------------------------------
# Metropolis updates
# ---------------------------------------------------------------------------

def update_lambda_tilde(state: LatentState, params: ModelParams, hyper: Hyperpriors,
                        rng: np.random.Generator, proposal_sd: float = 0.5,
                        total: np.ndarray | None = None) -> float:
    """Log-scale random-walk Metropolis step on the abundance threshold.

    The indicator breaks gamma conjugacy, so the z-likelihood times the gamma
    prior is evaluated directly; the multiplicative proposal contributes a
    log-ratio correction.  Rejection keeps the current value.
    """
    if total is None:
        total = state.total_abundance()
    lt = params.lambda_tilde
    prop = lt * math.exp(proposal_sd * rng.standard_normal())
    t0, t1 = params.theta
    r = params.z - t0
    d_cur = (total >= lt).astype(float)
    d_prop = (total >= prop).astype(float)
    loglik_diff = -0.5 * float(np.sum((r - t1 * d_prop) ** 2 - (r - t1 * d_cur) ** 2))
    prior_diff = (hyper.alpha_lambda - 1.0) * (math.log(prop) - math.log(lt)) \
        - hyper.beta_lambda * (prop - lt)
    log_ratio = loglik_diff + prior_diff + (math.log(prop) - math.log(lt))
    if math.log(rng.random()) < log_ratio:
        return prop
    return lt


def _loglambda_sweep(ll, lam, total, trend, alpha, sigma2, mu1, sigma2_1,
                     y_full, eff_full, obs_f, z, theta0, theta1, lambda_tilde,
                     preferential, sd, rng, colors, color_meta, accept_out):
    """One full single-site Metropolis sweep over days x species, in place.

    Days of equal parity are conditionally independent given the other parity
    (the process is first-order Markov and all other terms are per-day), so
    each parity class updates in one vectorised step.  ``lam`` and ``total``
    are exp caches kept consistent with ``ll``.
    """
    n = ll.shape[1]
    half_sigma2 = 0.5 / sigma2
    b = np.empty_like(trend)
    b[:, 0] = 0.0
    b[:, 1:] = trend[:, 1:] - alpha[:, None] * trend[:, :-1]
    for j in range(ll.shape[0]):
        bj = b[j]
        aj = alpha[j]
        for S, (prev_idx, next_idx, has_first, has_next) in zip(colors, color_meta):
            cur = ll[j, S]
            prop = cur + sd[j, S] * rng.standard_normal(S.size)
            # incoming transition (initial-day prior at the first site)
            m_in = bj[S] + aj * ll[j, prev_idx]
            inv2v = np.full(S.size, half_sigma2)
            if has_first:
                m_in[0] = mu1[j]
                inv2v[0] = 0.5 / sigma2_1
            delta = ((cur - m_in) ** 2 - (prop - m_in) ** 2) * inv2v
            # outgoing transition (absent at the last day)
            x_next = ll[j, next_idx]
            bn = bj[next_idx]
            delta += (((x_next - bn - aj * cur) ** 2
                       - (x_next - bn - aj * prop) ** 2) * half_sigma2) * has_next
            # count likelihood on observed days
            lam_cur = lam[j, S]
            lam_prop = np.exp(prop)
            delta += (y_full[j, S] * (prop - cur)
                      - eff_full[S] * (lam_prop - lam_cur)) * obs_f[S]
            if preferential:
                tot_prop = total[S] - lam_cur + lam_prop
                r = z[S] - theta0
                delta += 0.5 * ((r - theta1 * (total[S] >= lambda_tilde)) ** 2
                                - (r - theta1 * (tot_prop >= lambda_tilde)) ** 2)
            delta = np.where(np.isfinite(delta), delta, -np.inf)
            acc = np.log(rng.random(S.size)) < delta
            idx = S[acc]
            ll[j, idx] = prop[acc]
            lam[j, idx] = lam_prop[acc]
            if preferential:
                total[idx] = tot_prop[acc]
            accept_out[j, S] = acc


def _day_colors(n: int):
    """Parity classes of day positions plus precomputed neighbour indexing."""
    colors = (np.arange(0, n, 2), np.arange(1, n, 2))
    meta = []
    for s in colors:
        prev_idx = np.maximum(s - 1, 0)
        next_idx = np.minimum(s + 1, n - 1)
        has_first = bool(s.size and s[0] == 0)
        has_next = (s < n - 1).astype(float)
        meta.append((prev_idx, next_idx, has_first, has_next))
    return colors, meta


def update_loglambda(state: LatentState, params: ModelParams, obs: ObservationSet,
                     covariates: CovariateSeries, hyper: Hyperpriors,
                     config: McmcConfig, rng: np.random.Generator,
                     proposal_sd: np.ndarray | float | None = None) -> LatentState:
    """One Metropolis sweep over the whole latent path; mutates ``state``.

    Each site's acceptance ratio multiplies the process terms flowing into
    and out of that day, the count likelihood when the day was observed and,
    in the preferential variant, the augmentation likelihood through the
    total-abundance indicator.  Unobserved days keep only the process and
    indicator terms, which is how missingness informs the path.
    """
    ll = state.log_lambda
    j, n = ll.shape
    if proposal_sd is None:
        proposal_sd = config.proposal_sd_loglambda
    sd = np.broadcast_to(np.asarray(proposal_sd, dtype=float), (j, n))
    y_full = np.zeros((j, n))
    eff_full = np.ones(n)
    obs_f = np.zeros(n)
    y_full[:, obs.observed_days] = obs.counts
    eff_full[obs.observed_days] = obs.effort
    obs_f[obs.observed_days] = 1.0
    trend = params.beta @ covariates.values[:n].T
    colors, meta = _day_colors(n)
    accept = np.zeros((j, n), dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        lam = np.exp(ll)
        total = lam.sum(axis=0)
        _loglambda_sweep(
            ll, lam, total, trend, params.alpha, params.sigma2,
            hyper.mu1, hyper.sigma2_1, y_full, eff_full, obs_f,
            params.z, params.theta[0], params.theta[1], params.lambda_tilde,
            config.preferential, sd, rng, colors, meta, accept,
        )
    return state


# ---------------------------------------------------------------------------
# full chain
# ---------------------------------------------------------------------------

def _initial_values(obs: ObservationSet, covariates: CovariateSeries,
                    config: McmcConfig):
    """Deterministic feasible starting point built from the data.

    Observed days start at log((y + 0.5)/effort); unobserved days are filled
    by linear interpolation, with leading/trailing stretches replaced by the
    least-squares trend.
    """
    n = covariates.n_days
    j = obs.n_species
    x = covariates.values
    ll = np.zeros((j, n))
    od = obs.observed_days
    if od.size:
        vals = np.log((obs.counts + 0.5) / obs.effort[None, :])
        for s in range(j):
            ll[s] = np.interp(np.arange(n), od, vals[s])
    beta = np.zeros((j, x.shape[1]))
    for s in range(j):
        beta[s], *_ = np.linalg.lstsq(x, ll[s], rcond=None)
    if od.size:
        # trend fill for the unanchored ends
        trend = beta @ x.T
        first, last = od[0], od[-1]
        if first > 0:
            ll[:, :first] = trend[:, :first]
        if last < n - 1:
            ll[:, last + 1:] = trend[:, last + 1:]
    n_obs = od.size
    frac = min(max(n_obs / n, 1.0 / (n + 1)), 1.0 - 1.0 / (n + 1))
    # threshold starts on the abundance scale: effort-corrected totals
    totals = obs.counts.sum(axis=0) / obs.effort if n_obs else np.zeros(0)
    positive = totals[totals > 0]
    lam_tilde = float(np.median(positive)) if positive.size else 1.0
    params = ModelParams(
        alpha=np.full(j, 0.5),
        beta=beta,
        sigma2=0.1,
        theta=np.array([float(ndtri(frac)), 0.0]),
        lambda_tilde=lam_tilde,
        mu_beta=beta.mean(axis=0),
        sigma_beta=np.eye(x.shape[1]),
        z=np.where(obs.tau == 1, 0.5, -0.5).astype(float),
    )
    return params, ll


def _abort(name, iteration, chain):
    raise NumericalAbortError(
        f"non-finite value in block '{name}' at iteration {iteration} (chain {chain})"
    )


def _check_finite(name, value, iteration, chain):
    if isinstance(value, float):
        if not math.isfinite(value):
            _abort(name, iteration, chain)
    elif not np.isfinite(value).all():
        _abort(name, iteration, chain)


def _single_chain(obs, covariates, hyper, config, chain_id):
    rng = np.random.default_rng([config.seed, _CHAIN_STREAM, chain_id])
    pref = config.preferential
    n = covariates.n_days
    j = obs.n_species
    x = covariates.values
    params, ll = _initial_values(obs, covariates, config)

    y_full = np.zeros((j, n))
    eff_full = np.ones(n)
    obs_f = np.zeros(n)
    y_full[:, obs.observed_days] = obs.counts
    eff_full[obs.observed_days] = obs.effort
    obs_f[obs.observed_days] = 1.0

    colors, color_meta = _day_colors(n)
    log_sd = np.full((j, n), math.log(config.proposal_sd_loglambda))
    log_sd_lt = math.log(config.proposal_sd_lambda_tilde)
    accept = np.zeros((j, n), dtype=bool)
    state = LatentState(log_lambda=ll)
    ll = state.log_lambda
    theta_prior_prec = _inv_sym(hyper.Sigma_theta)
    mu0_prior_prec = _inv_sym(hyper.Sigma0)

    m = config.draws_per_chain
    store = {
        "alpha": np.empty((m, j)),
        "beta": np.empty((m, j, x.shape[1])),
        "sigma2": np.empty(m),
        "mu_beta": np.empty((m, x.shape[1])),
        "sigma_beta": np.empty((m, x.shape[1], x.shape[1])),
        "iteration": np.empty(m, dtype=int),
    }
    if pref:
        store["theta"] = np.empty((m, 2))
        store["lambda_tilde"] = np.empty(m)
        store["z"] = np.empty((m, n))
    n_state = (m + config.state_stride - 1) // config.state_stride
    state_store = np.empty((n_state, j, n))
    state_iters = np.empty(n_state, dtype=int)

    acc_ll_post = 0.0
    acc_ll_n = 0
    acc_lt_post = 0
    acc_lt_n = 0
    k = 0
    ks = 0

    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, config.n_iterations + 1):
            in_burn = it <= config.burn_in
            lam = np.exp(ll)
            total = lam.sum(axis=0)

            if pref:
                params.z = update_z(state, params, obs, rng, total=total)
                _check_finite("z", params.z, it, chain_id)
                params.theta = update_theta(params.z, state, params, hyper, rng,
                                            total=total, prior_prec=theta_prior_prec)
                _check_finite("theta", params.theta, it, chain_id)
                old_lt = params.lambda_tilde
                params.lambda_tilde = update_lambda_tilde(
                    state, params, hyper, rng,
                    proposal_sd=math.exp(log_sd_lt), total=total,
                )
                _check_finite("lambda_tilde", params.lambda_tilde, it, chain_id)
                accepted_lt = params.lambda_tilde != old_lt
                if in_burn and config.adapt:
                    gamma = (it + 10) ** -0.6
                    log_sd_lt += gamma * ((1.0 if accepted_lt else 0.0) - _TARGET_ACCEPT)
                    log_sd_lt = min(max(log_sd_lt, _LOG_SD_MIN), _LOG_SD_MAX)
                if not in_burn:
                    acc_lt_post += int(accepted_lt)
                    acc_lt_n += 1

            trend = params.beta @ x.T
            _loglambda_sweep(
                ll, lam, total, trend, params.alpha, params.sigma2,
                hyper.mu1, hyper.sigma2_1, y_full, eff_full, obs_f,
                params.z, params.theta[0], params.theta[1], params.lambda_tilde,
                pref, np.exp(log_sd), rng, colors, color_meta, accept,
            )
            _check_finite("loglambda", ll, it, chain_id)
            if in_burn and config.adapt:
                gamma = (it + 10) ** -0.6
                np.clip(log_sd + gamma * (accept - _TARGET_ACCEPT),
                        _LOG_SD_MIN, _LOG_SD_MAX, out=log_sd)
            if not in_burn:
                acc_ll_post += float(accept.mean())
                acc_ll_n += 1

            params.alpha = update_alpha(state, params, covariates, hyper, rng,
                                        truncate=config.truncate_alpha)
            _check_finite("alpha", params.alpha, it, chain_id)
            sb_inv = _inv_sym(params.sigma_beta)
            params.beta = update_beta(state, params, covariates, hyper, rng,
                                      prior_prec=sb_inv)
            _check_finite("beta", params.beta, it, chain_id)
            params.mu_beta = update_mu_beta(params, hyper, rng, sb_inv=sb_inv,
                                            prior_prec=mu0_prior_prec)
            _check_finite("mu_beta", params.mu_beta, it, chain_id)
            params.sigma_beta = update_sigma_beta(params, hyper, rng)
            _check_finite("sigma_beta", params.sigma_beta, it, chain_id)
            params.sigma2 = update_sigma2(state, params, covariates, hyper, rng)
            _check_finite("sigma2", params.sigma2, it, chain_id)

            if not in_burn and (it - config.burn_in) % config.thin == 0:
                store["alpha"][k] = params.alpha
                store["beta"][k] = params.beta
                store["sigma2"][k] = params.sigma2
                store["mu_beta"][k] = params.mu_beta
                store["sigma_beta"][k] = params.sigma_beta
                store["iteration"][k] = it
                if pref:
                    store["theta"][k] = params.theta
                    store["lambda_tilde"][k] = params.lambda_tilde
                    store["z"][k] = params.z
                if k % config.state_stride == 0:
                    state_store[ks] = ll
                    state_iters[ks] = it
                    ks += 1
                k += 1

    acceptance = {
        "loglambda": acc_ll_post / acc_ll_n if acc_ll_n else float("nan"),
    }
    if pref:
        acceptance["lambda_tilde"] = acc_lt_post / acc_lt_n if acc_lt_n else float("nan")
    store["state"] = state_store[:ks]
    store["state_iters"] = state_iters[:ks]
    return store, acceptance


def _merge_chains(per_chain, accs, covariates, config):
    m = config.draws_per_chain
    c = config.n_chains
    pref = config.preferential

    def cat(key):
        return np.concatenate([pc[key] for pc in per_chain], axis=0)

    iteration = cat("iteration")
    chain_col = np.repeat(np.arange(c), m)
    state = np.concatenate([pc["state"] for pc in per_chain], axis=0)
    state_iters = np.concatenate([pc["state_iters"] for pc in per_chain], axis=0)
    state_chain = np.concatenate(
        [np.full(pc["state"].shape[0], i) for i, pc in enumerate(per_chain)]
    )

    alpha = cat("alpha")
    beta = cat("beta")
    sigma2 = cat("sigma2")
    j, p = beta.shape[1], beta.shape[2]

    chains_of = {}
    for s in range(j):
        chains_of[f"alpha_{s + 1}"] = alpha[:, s].reshape(c, m)
        for l in range(p):
            chains_of[f"beta_{s + 1}_{l + 1}"] = beta[:, s, l].reshape(c, m)
    chains_of["sigma2"] = sigma2.reshape(c, m)
    if pref:
        theta = cat("theta")
        chains_of["theta0"] = theta[:, 0].reshape(c, m)
        chains_of["theta1"] = theta[:, 1].reshape(c, m)
        chains_of["lambda_tilde"] = cat("lambda_tilde").reshape(c, m)

    diag = diagnostics.summarize(chains_of)
    acceptance = {
        key: float(np.mean([a[key] for a in accs])) for key in accs[0]
    }
    return PosteriorDraws(
        variant=config.model_variant,
        iteration=iteration,
        chain=chain_col,
        alpha=alpha,
        beta=beta,
        sigma2=sigma2,
        mu_beta=cat("mu_beta"),
        sigma_beta=cat("sigma_beta"),
        theta=cat("theta") if pref else None,
        lambda_tilde=cat("lambda_tilde") if pref else None,
        z=cat("z") if pref else None,
        loglambda=state,
        loglambda_iteration=state_iters,
        loglambda_chain=state_chain,
        acceptance=acceptance,
        diagnostics=diag,
        config=config,
        day_index=covariates.day_index.copy(),
    )


def run_chain(data: ObservationSet, covariates: CovariateSeries,
              hyper: Hyperpriors | None = None,
              config: McmcConfig | None = None) -> PosteriorDraws:
    """Run the full sampler and return thinned post-burn-in draws.

    Per iteration the sweep order is: augmentation z, probit coefficients,
    threshold (preferential variant only), latent path, autoregression,
    trend coefficients, their hierarchical mean and covariance, process
    variance.  Chains use disjoint RNG substreams of the configured seed and
    the result is bit-reproducible for a fixed (inputs, config) pair.
    """
    config = config or McmcConfig()
    check_alignment(data, covariates)
    if hyper is None:
        # effort-corrected so the threshold prior lives on the abundance scale
        max_total = float((data.counts.sum(axis=0) / data.effort).max()) \
            if data.n_observed else None
        hyper = default_hyperpriors(data.n_species, covariates.n_covariates, max_total)
    if hyper.mu1.shape[0] != data.n_species:
        raise ValueError("hyperprior mu1 does not match the species count")
    per_chain = []
    accs = []
    for chain_id in range(config.n_chains):
        draws, acc = _single_chain(data, covariates, hyper, config, chain_id)
        per_chain.append(draws)
        accs.append(acc)
    return _merge_chains(per_chain, accs, covariates, config)
