"""Synthetic dataset generators for experiments and tests."""

from __future__ import annotations


import numpy as np
from scipy.special import expit

from .data import Dataset

__all__ = ["simulate_correlated", "simulate_binomial", "simulate_negbin"]


def simulate_correlated(N: int, P: int, seed: int) -> tuple[Dataset, dict]:
    """Two nearly-identical covariates that each explain the response.

    A latent z ~ N(0, 1) drives binomial responses with total count 10;
    covariates 1 and 2 are z plus N(0, 1e-4) noise, the rest are
    independent standard normals.  The posterior concentrates on the two
    single-covariate models, so the inclusion probability of either
    correlated covariate is close to one half.
    """
    if P < 3:
        raise ValueError("the correlated scenario needs P >= 3")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(N, P))
    z = rng.normal(size=N)
    noise_sd = 1e-2  # variance 1e-4
    x[:, 0] = z + noise_sd * rng.normal(size=N)
    x[:, 1] = z + noise_sd * rng.normal(size=N)
    c = np.full(N, 10, dtype=np.int64)
    y = rng.binomial(c, expit(z))
    truth = {"z": z, "logits": z, "correlated_pair": (0, 1)}
    return Dataset(X=x, Y=y, C=c), truth


def simulate_binomial(
    N: int,
    P: int,
    active_indices,
    betas,
    C: int = 1,
    beta0: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """Independent-normal covariates with binomial responses from a
    sparse logit."""
    active = list(active_indices)
    betas = np.asarray(betas, dtype=np.float64)
    if len(active) != betas.size:
        raise ValueError("active_indices and betas must have equal length")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(N, P))
    logits = beta0 + x[:, active] @ betas
    c = np.full(N, C, dtype=np.int64)
    y = rng.binomial(c, expit(logits))
    return Dataset(X=x, Y=y, C=c)


def simulate_negbin(
    N: int,
    P: int,
    active_indices,
    betas,
    nu: float,
    psi0: float,
    seed: int,
) -> Dataset:
    """Independent-normal covariates with negative-binomial responses of
    mean exp(psi + psi0) and dispersion nu."""
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    active = list(active_indices)
    betas = np.asarray(betas, dtype=np.float64)
    if len(active) != betas.size:
        raise ValueError("active_indices and betas must have equal length")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(N, P))
    psi = x[:, active] @ betas if active else np.zeros(N)
    mean = np.exp(psi + psi0)
    y = rng.negative_binomial(nu, nu / (nu + mean))
    return Dataset(X=x, Y=y, C=np.ones(N, dtype=np.int64))
