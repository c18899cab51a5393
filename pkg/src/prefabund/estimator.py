"""Estimator front-end so the sampler composes with scikit-learn tooling.

``GompertzAbundanceModel`` follows the estimator protocol: constructor
arguments are stored verbatim, ``fit`` validates and runs the chains, fitted
results land in trailing-underscore attributes, and ``get_params`` /
``set_params`` / ``clone`` behave as scikit-learn expects.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import derived, mcmc
from .core import CovariateSeries, Hyperpriors, ObservationSet, check_alignment


class GompertzAbundanceModel(BaseEstimator):
    """Bayesian trend-anchored Gompertz abundance model.

    Parameters mirror :class:`prefabund.mcmc.McmcConfig`; ``preferential``
    selects whether the observation-day layer is part of the likelihood.
    After ``fit`` the posterior is available as ``draws_`` plus convenience
    accessors for abundance point estimates and intervals.
    """

    def __init__(self, n_iterations=50_000, burn_in=20_000, thin=10,
                 preferential=True, proposal_sd_loglambda=0.5,
                 proposal_sd_lambda_tilde=0.5, adapt=True, seed=0, n_chains=1,
                 truncate_alpha=True, state_stride=1, hyper=None):
        self.n_iterations = n_iterations
        self.burn_in = burn_in
        self.thin = thin
        self.preferential = preferential
        self.proposal_sd_loglambda = proposal_sd_loglambda
        self.proposal_sd_lambda_tilde = proposal_sd_lambda_tilde
        self.adapt = adapt
        self.seed = seed
        self.n_chains = n_chains
        self.truncate_alpha = truncate_alpha
        self.state_stride = state_stride
        self.hyper = hyper

    def _config(self) -> mcmc.McmcConfig:
        return mcmc.McmcConfig(
            n_iterations=self.n_iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            model_variant=mcmc.PREFERENTIAL if self.preferential else mcmc.NON_PREFERENTIAL,
            proposal_sd_loglambda=self.proposal_sd_loglambda,
            proposal_sd_lambda_tilde=self.proposal_sd_lambda_tilde,
            adapt=self.adapt,
            seed=self.seed,
            n_chains=self.n_chains,
            truncate_alpha=self.truncate_alpha,
            state_stride=self.state_stride,
        )

    def fit(self, observations: ObservationSet, covariates: CovariateSeries):
        """Run the sampler on one dataset and return self."""
        if not isinstance(observations, ObservationSet):
            raise TypeError("observations must be an ObservationSet")
        if not isinstance(covariates, CovariateSeries):
            raise TypeError("covariates must be a CovariateSeries")
        if self.hyper is not None and not isinstance(self.hyper, Hyperpriors):
            raise TypeError("hyper must be a Hyperpriors instance or None")
        check_alignment(observations, covariates)
        self.draws_ = mcmc.run_chain(observations, covariates,
                                     hyper=self.hyper, config=self._config())
        self.acceptance_ = self.draws_.acceptance
        self.diagnostics_ = self.draws_.diagnostics
        self.n_species_ = observations.n_species
        self.n_days_ = covariates.n_days
        return self

    def _check_fitted(self):
        if not hasattr(self, "draws_"):
            raise NotFittedError("call fit before using this estimator")

    def predict(self, statistic: str = "mean") -> np.ndarray:
        """Posterior point estimate of abundance, shape (J, N)."""
        self._check_fitted()
        if statistic == "mean":
            return derived.posterior_mean_abundance(self.draws_)
        if statistic == "median":
            return derived.summarize_series(self.draws_.loglambda)["median"]
        raise ValueError("statistic must be 'mean' or 'median'")

    def posterior_interval(self, level: float = 0.95):
        """(lo, hi) pointwise abundance bands, each (J, N)."""
        self._check_fitted()
        return derived.summarize_series(self.draws_.loglambda, levels=(level,))[level]

    def score(self, truth_abundance: np.ndarray) -> float:
        """Negative RMSE of the posterior-mean abundance against a known truth
        (higher is better, scikit-learn convention)."""
        self._check_fitted()
        est = self.predict("mean")
        return -derived.rmse_abundance(np.asarray(est).ravel(),
                                       np.asarray(truth_abundance).ravel())
