"""Inference for simulation-based models through quadratic metamodels of simulated log-likelihoods."""
__version__ = "0.1.0"

from .autotune import AdjustResult, adjust_weights, cubic_pvalue, opt_design, stv
from .estimators import ProxyMetamodel, QuadraticMetamodel
from .k1 import BlockPartition, default_blocks, estimate_k1, project_psd
from .mesle import mesle_ci_1d, mesle_confregion, mesle_ht
from .metamodel import (
    ConfidenceSet,
    MetaFit,
    NoInteriorMaximumError,
    RankDeficiencyError,
    SimLogLikTable,
    TestResult,
    fit_quadratic,
    mesle_point,
    mllr_full,
    proxy_bias_bound,
)
from .pfilter import PFResult, bpf_run, bpf_run_many, logmeanexp, multinomial_resample
from .pmcmc import PmcmcChain, ess, pmcmc_run, running_estimates
from .proxy import ProxyFit, build_cqc, proxy_ci_1d, proxy_confregion, proxy_fit, proxy_ht

__all__ = [
    "AdjustResult", "adjust_weights", "cubic_pvalue", "opt_design", "stv",
    "ProxyMetamodel", "QuadraticMetamodel",
    "BlockPartition", "default_blocks", "estimate_k1", "project_psd",
    "mesle_ci_1d", "mesle_confregion", "mesle_ht",
    "ConfidenceSet", "MetaFit", "NoInteriorMaximumError", "RankDeficiencyError", "SimLogLikTable",
    "TestResult", "fit_quadratic", "mesle_point", "mllr_full", "proxy_bias_bound",
    "PFResult", "bpf_run", "bpf_run_many", "logmeanexp", "multinomial_resample",
    "PmcmcChain", "ess", "pmcmc_run", "running_estimates",
    "ProxyFit", "build_cqc", "proxy_ci_1d", "proxy_confregion", "proxy_fit", "proxy_ht",
]
