"""Bayesian variable selection for count-data regression.

Weighted tempered Gibbs sampling over inclusion vectors, with the
binomial or negative-binomial likelihood gaussianized by Polya-Gamma
augmentation so that coefficients integrate out analytically.  Retained
samples carry bounded importance weights and inclusion probabilities are
estimated in Rao-Blackwellized form.
"""

import os as _os

# Thread count for the BLAS-backed inner loops; must be applied before
# numpy is first imported to take effect.
_threads = _os.environ.get("COUNTSEL_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
del _os, _threads

from .data import Dataset, ModelConfig
from .diagnostics import compute_pit, weight_summary
from .glm import (
    CholeskyCache,
    InclusionState,
    beta_hat,
    conditional_pips,
    kappa,
    mll,
    psi_hat,
    sample_beta,
)
from .io import load_csv, write_dataset
from .negbin import NegBinState, joint_omega_nu_update, nb_extra_log_factor, nb_prior_omega
from .oracle import enumerate_posterior
from .pg import PgParams, pg_draw, pg_factor_log, pg_mean, pg_sample
from .runner import RunSummary, fit
from .sampler import (
    ChainResult,
    ChainState,
    SamplerConfig,
    WeightedSample,
    adapt_xi,
    eta,
    flip,
    mg_accept,
    omega_update,
    phi,
    rao_blackwell_pips,
    run_chain,
    run_chains,
    sample_i,
)
from .simulate import simulate_binomial, simulate_correlated, simulate_negbin

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ModelConfig",
    "InclusionState",
    "CholeskyCache",
    "PgParams",
    "pg_sample",
    "pg_draw",
    "pg_mean",
    "pg_factor_log",
    "kappa",
    "mll",
    "conditional_pips",
    "beta_hat",
    "psi_hat",
    "sample_beta",
    "SamplerConfig",
    "ChainState",
    "ChainResult",
    "WeightedSample",
    "eta",
    "phi",
    "sample_i",
    "flip",
    "mg_accept",
    "omega_update",
    "adapt_xi",
    "run_chain",
    "run_chains",
    "rao_blackwell_pips",
    "NegBinState",
    "nb_prior_omega",
    "nb_extra_log_factor",
    "joint_omega_nu_update",
    "enumerate_posterior",
    "simulate_correlated",
    "simulate_binomial",
    "simulate_negbin",
    "load_csv",
    "write_dataset",
    "compute_pit",
    "weight_summary",
    "RunSummary",
    "fit",
]
