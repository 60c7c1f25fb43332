"""Bayesian power-prior analysis and design for stratified piecewise exponential PH trials."""
from .data import (IntervalPartition, RiskTable, StratumMap, SurvivalDataset, build_risk_table, default_partition,
                   load_dataset, load_melanoma, summarize)
from .design import (HypothesisSpec, SamplingPrior, build_default_sampling_priors, build_point_mass_prior,
                     decide_sample_size, estimate_operating_characteristic)
from .errors import ConfigError, PPSurvError, RuntimeFailure
from .model import A0Spec, BetaPrior, HazardPrior, MvnMixture, PriorSpec
from .samplers import (PosteriorDraws, SamplerConfig, approximate_prior_beta, fit_single_mvn, phm_fixed_a0,
                       phm_random_a0)
from .trialsim import TrialDesignConfig, construct_observed_data, simulate_complete_data

__version__ = "0.1.0"
