"""Posterior-predictive treatment assignment (PPTA) for causal effects under limited overlap."""

from .balance import BalanceReport, balance_report, ppta_balance, standardized_difference
from .comparators import (
    WeightVector,
    bootstrap_interval,
    crump_trim,
    iptw_weights,
    overlap_weights,
    parse_method,
    weighted_difference,
)
from .data import Dataset, McmcConfig, PriorConfig, load_dataset, validate_config, write_dataset
from .design import DesignDraw, draw_design_subset, draw_ppta, inclusion_probabilities
from .outcome import (
    CausalPosterior,
    fit_outcome_posterior,
    ppta_causal_posterior,
    summarize_posterior,
)
from .propensity import fit_propensity_mle, fit_propensity_posterior, posterior_scores
from .simulation import SimConfig, generate_dataset, run_study, summarize_study

__version__ = "0.1.0"
