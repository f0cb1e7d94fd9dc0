"""Zero-inflated Beta regression sampled by Hamiltonian Monte Carlo."""

from .design import DesignMatrix, Standardizer
from .diagnostics import DiagnosticsReport, compute_diagnostics, ebfmi, ess_bulk, split_rhat
from .hmc import HmcConfig, HmcResult, hmc_sample
from .posterior import ZibPosterior, fit_zib
from .predictive import (
    PredictiveDistribution,
    elpd_holdout,
    log_predictive_matrix,
    posterior_predictive,
    predict,
    prior_predictive,
)
from .zib import ZibCoefficients, make_log_posterior, sample_zib, zib_logpdf

__all__ = [
    "DesignMatrix",
    "DiagnosticsReport",
    "HmcConfig",
    "HmcResult",
    "PredictiveDistribution",
    "Standardizer",
    "ZibCoefficients",
    "ZibPosterior",
    "compute_diagnostics",
    "ebfmi",
    "elpd_holdout",
    "ess_bulk",
    "fit_zib",
    "hmc_sample",
    "log_predictive_matrix",
    "make_log_posterior",
    "posterior_predictive",
    "predict",
    "prior_predictive",
    "sample_zib",
    "split_rhat",
    "zib_logpdf",
]
