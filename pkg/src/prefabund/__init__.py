"""Simulation and Bayesian inference for daily relative-abundance series whose
observation days may depend on abundance itself."""

from .core import (
    CovariateSeries,
    Hyperpriors,
    LatentState,
    ModelParams,
    ObservationSet,
    default_hyperpriors,
    inclusion_probability,
    observation_logdensity,
    process_logdensity,
    process_mean,
)
from .covariates import (
    KernelSpec,
    RawEnvironmentSeries,
    build_design,
    convolve_backward_box,
    gdd_design,
    growing_degree_days,
)
from .derived import (
    GrowthSeries,
    PhenometricPosterior,
    growth_rate_median,
    phenometric_psi,
    rmse_abundance,
    summarize_series,
    theta1_preferential_test,
)
from .estimator import GompertzAbundanceModel
from .mcmc import McmcConfig, NumericalAbortError, PosteriorDraws, run_chain
from .simulate import (
    LogisticSampling,
    PreferentialSwitchSampling,
    RandomSampling,
    SimulationTruth,
    apply_sampling,
    simulate_counts,
    simulate_dataset,
    simulate_process,
    synthetic_temperature,
)

__version__ = "0.1.0"

__all__ = [
    "CovariateSeries",
    "GompertzAbundanceModel",
    "GrowthSeries",
    "Hyperpriors",
    "KernelSpec",
    "LatentState",
    "LogisticSampling",
    "McmcConfig",
    "ModelParams",
    "NumericalAbortError",
    "ObservationSet",
    "PhenometricPosterior",
    "PosteriorDraws",
    "PreferentialSwitchSampling",
    "RandomSampling",
    "RawEnvironmentSeries",
    "SimulationTruth",
    "apply_sampling",
    "build_design",
    "convolve_backward_box",
    "default_hyperpriors",
    "gdd_design",
    "growing_degree_days",
    "growth_rate_median",
    "inclusion_probability",
    "observation_logdensity",
    "phenometric_psi",
    "process_logdensity",
    "process_mean",
    "rmse_abundance",
    "run_chain",
    "simulate_counts",
    "simulate_dataset",
    "simulate_process",
    "summarize_series",
    "synthetic_temperature",
    "theta1_preferential_test",
]
