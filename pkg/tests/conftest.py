import numpy as np
import pytest

from prefabund.core import CovariateSeries, ModelParams, ObservationSet, default_hyperpriors


def make_covariates(n_days=10, amplitude=2.0, seed=0, period=None):
    """Intercept + one smooth positive column, deterministic given seed."""
    rng = np.random.default_rng(seed)
    period = period or max(n_days, 4)
    t = np.arange(n_days)
    col = amplitude * (1.0 + np.sin(2.0 * np.pi * t / period)) + 0.1 * rng.random(n_days)
    values = np.column_stack([np.ones(n_days), col])
    return CovariateSeries(values=values, day_index=np.arange(1, n_days + 1))


def make_params(n_species=1, n_covariates=2, alpha=0.6, beta=None, sigma2=0.05,
                theta=(0.0, 0.0), lambda_tilde=1.0, n_days=10):
    beta_mat = np.zeros((n_species, n_covariates))
    if beta is None:
        beta_mat[:, 0] = 0.2
        if n_covariates > 1:
            beta_mat[:, 1] = 0.3
    else:
        beta_mat[:] = np.asarray(beta, dtype=float)
    return ModelParams(
        alpha=np.full(n_species, alpha),
        beta=beta_mat,
        sigma2=sigma2,
        theta=np.asarray(theta, dtype=float),
        lambda_tilde=lambda_tilde,
        mu_beta=beta_mat.mean(axis=0),
        sigma_beta=np.eye(n_covariates),
        z=np.zeros(n_days),
    )


def make_observations(n_days=10, observed=None, counts=None, effort=None, n_species=1):
    observed = np.asarray(observed if observed is not None else range(n_days), dtype=int)
    tau = np.zeros(n_days, dtype=int)
    tau[observed] = 1
    if counts is None:
        counts = np.ones((n_species, observed.size), dtype=np.int64)
    if effort is None:
        effort = np.ones(observed.size)
    return ObservationSet(
        tau=tau, observed_days=observed,
        counts=np.asarray(counts), effort=np.asarray(effort, dtype=float),
        day_index=np.arange(1, n_days + 1),
    )


@pytest.fixture
def cov10():
    return make_covariates(10)


@pytest.fixture
def hyper_default():
    return default_hyperpriors(1, 2, max_total_count=50)
