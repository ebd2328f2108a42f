"""Exhaustive conditional-posterior enumeration for small covariate counts.

Holding omega (and the dispersion) fixed, the model posterior over the
2^P inclusion vectors is available exactly: each subset's marginal
likelihood times the Bernoulli(h) prior mass, normalized by
log-sum-exp.  This is the ground truth that frozen-omega chains are
checked against.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, ModelConfig
from .glm import InclusionState, mll

__all__ = ["enumerate_posterior", "MAX_ENUM_P"]

MAX_ENUM_P = 15


def enumerate_posterior(
    dataset: Dataset,
    omega: np.ndarray,
    model_config: ModelConfig,
    nu: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional PIPs and model probabilities given omega.

    Returns ``(pips, probs)`` where ``probs[mask]`` is the posterior
    probability of the inclusion vector whose set bits are the active
    columns (bit j = covariate j).
    """
    p = dataset.P
    if p > MAX_ENUM_P:
        raise ValueError(f"enumeration supports at most {MAX_ENUM_P} covariates, got {p}")
    cfg = model_config.resolve(dataset)
    log_h = math.log(cfg.h)
    log_1mh = math.log1p(-cfg.h)

    n_models = 1 << p
    log_post = np.empty(n_models)
    for mask in range(n_models):
        active = tuple(j for j in range(p) if mask >> j & 1)
        val = mll(InclusionState(active, p), omega, dataset, cfg, nu=nu)
        log_post[mask] = val + len(active) * log_h + (p - len(active)) * log_1mh

    log_z = logsumexp(log_post)
    probs = np.exp(log_post - log_z)
    probs /= probs.sum()

    pips = np.zeros(p)
    masks = np.arange(n_models)
    for j in range(p):
        pips[j] = probs[(masks >> j & 1).astype(bool)].sum()
    return pips, probs
