"""Negative-binomial likelihood extension: dispersion handling and the
joint (omega, log nu) refresh.

The response model is NegBin(Y_n | psi_n, nu) with mean exp(psi_n + psi0)
and variance mu + mu^2/nu.  Writing the likelihood through the logistic
identity with shape Y_n + nu and logit psi_n + psi0 - log nu makes it
gaussianizable by the same omega augmentation as the binomial model, at
the cost of nu-dependent constants (gamma functions and a 2^-nu factor)
and the offset delta = psi0 - log nu entering the sufficient statistics.

log nu carries a flat improper prior.  The joint refresh proposes
log nu' by a Gaussian random walk and then omega' from its conditional
at the current posterior-mean coefficients; the acceptance ratio is
derived in docs/negbin_update.md and never evaluates an omega density,
because the omega base densities cancel between target and proposal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import Dataset, ModelConfig
from .glm import (
    CholeskyCache,
    _chol_or_name,
    _tri_lower_solve,
    _tri_upper_from_lower_solve,
)
from .pg import pg_draw

__all__ = [
    "NegBinState",
    "nb_prior_omega",
    "nb_extra_log_factor",
    "nb_log_constants",
    "joint_omega_nu_update",
]

NU_INIT = 1.0


@dataclass(frozen=True)
class NegBinState:
    """Log-dispersion and offset of the negative-binomial likelihood."""

    log_nu: float
    psi0: float

    def __post_init__(self):
        if not math.isfinite(self.log_nu):
            raise ValueError(f"log_nu must be finite, got {self.log_nu}")
        if not math.isfinite(self.psi0):
            raise ValueError(f"psi0 must be finite, got {self.psi0}")

    @property
    def nu(self) -> float:
        return math.exp(self.log_nu)


def nb_prior_omega(Y: np.ndarray, nu: float, rng: np.random.Generator) -> np.ndarray:
    """Draws from the omega base law with shape Y_n + nu and zero tilt."""
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    return pg_draw(np.asarray(Y, dtype=np.float64) + nu, 0.0, rng)


def nb_extra_log_factor(
    kappa: np.ndarray, omega: np.ndarray, psi0: float, log_nu: float
) -> float:
    """Offset term of the marginal log likelihood:
    kappa . delta - omega . delta^2 / 2 with delta = psi0 - log nu."""
    kappa = np.asarray(kappa, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if np.any(omega <= 0):
        raise ValueError("omega entries must be positive")
    delta = psi0 - log_nu
    return float(kappa.sum()) * delta - 0.5 * delta * delta * float(omega.sum())


def nb_log_constants(Y: np.ndarray, nu: float) -> float:
    """nu-dependent constants of the gaussianized likelihood:
    sum_n [log Gamma(Y_n + nu) - log Gamma(nu) - nu log 2]."""
    y = np.asarray(Y, dtype=np.float64)
    return float(gammaln(y + nu).sum() - y.size * (gammaln(nu) + nu * math.log(2.0)))


def _log_cosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def _joint_log_alpha_parts(
    cache: CholeskyCache,
    dataset: Dataset,
    config: ModelConfig,
    omega_prop: np.ndarray,
    log_nu: float,
    log_nu_prop: float,
    tilt_fwd: np.ndarray,
):
    """Log acceptance ratio of the joint refresh; see docs/negbin_update.md.

    Also returns the proposal-side statistics for reuse on acceptance.
    """
    y = dataset.Y
    omega = cache.omega
    nu = math.exp(log_nu)
    nu_prop = math.exp(log_nu_prop)
    delta_prop = config.psi0 - log_nu_prop

    # current side from the cache (marginal likelihood incl. offset term)
    mll_cur = cache.mll_value()

    # proposed side from scratch on the active design
    xact = cache.active_design()
    kap_eff = 0.5 * (y - nu_prop) - omega_prop * delta_prop
    z2 = xact.T @ kap_eff
    a2 = (xact * omega_prop[:, None]).T @ xact
    a2[np.diag_indices_from(a2)] += cache.tau_vec
    l2 = _chol_or_name(a2, cache.order, dataset.names)
    zt2 = _tri_lower_solve(l2, z2)
    mll_prop = (
        0.5 * float(zt2 @ zt2)
        - float(np.log(np.diagonal(l2)).sum())
        + 0.5 * float(np.log(cache.tau_vec).sum())
    )
    kap_prop = 0.5 * (y - nu_prop)
    mll_prop += float(kap_prop.sum()) * delta_prop - 0.5 * delta_prop**2 * float(
        omega_prop.sum()
    )

    r_const = nb_log_constants(y, nu_prop) - nb_log_constants(y, nu)

    bhat2 = _tri_upper_from_lower_solve(l2, zt2)
    tilt_rev = xact @ bhat2 + delta_prop
    r_prop = (
        -0.5 * float(omega @ tilt_rev**2)
        + float((y + nu) @ _log_cosh(0.5 * tilt_rev))
        + 0.5 * float(omega_prop @ tilt_fwd**2)
        - float((y + nu_prop) @ _log_cosh(0.5 * tilt_fwd))
    )
    log_alpha = (mll_prop - mll_cur) + r_const + r_prop
    return log_alpha, a2, l2, zt2, kap_eff


def _joint_log_alpha(
    cache: CholeskyCache,
    dataset: Dataset,
    config: ModelConfig,
    omega_prop: np.ndarray,
    log_nu: float,
    log_nu_prop: float,
    tilt_fwd: np.ndarray,
) -> float:
    return _joint_log_alpha_parts(
        cache, dataset, config, omega_prop, log_nu, log_nu_prop, tilt_fwd
    )[0]


def _joint_step(
    cache: CholeskyCache,
    dataset: Dataset,
    config: ModelConfig,
    rng: np.random.Generator,
    log_nu: float,
    skip_mh: bool,
    rw_scale: float,
):
    """One proposal of the joint (omega, log nu) refresh.

    Returns (omega_prop, log_nu_prop, accepted, alpha, parts); ``parts``
    carries the proposal-side (A, L, Ztilde, kappa_eff) when the MH ratio
    was evaluated, for cache reuse on acceptance.
    """
    delta = config.psi0 - log_nu
    tilt_fwd = cache.psi_hat() + delta
    log_nu_prop = log_nu + (rw_scale * rng.standard_normal() if rw_scale > 0 else 0.0)
    nu_prop = math.exp(log_nu_prop)
    omega_prop = pg_draw(dataset.Y + nu_prop, tilt_fwd, rng)
    if skip_mh:
        return omega_prop, log_nu_prop, True, 1.0, None
    log_alpha, a2, l2, zt2, kap_eff = _joint_log_alpha_parts(
        cache, dataset, config, omega_prop, log_nu, log_nu_prop, tilt_fwd
    )
    if not math.isfinite(log_alpha):
        warnings.warn(
            "non-finite acceptance ratio in joint (omega, log nu) refresh; rejecting",
            RuntimeWarning,
        )
        return omega_prop, log_nu_prop, False, math.nan, None
    alpha = math.exp(min(log_alpha, 0.0))
    accepted = rng.random() < alpha
    return omega_prop, log_nu_prop, accepted, alpha, (a2, l2, zt2, kap_eff)


def joint_omega_nu_update(state, config: ModelConfig, dataset: Dataset,
                          rng: np.random.Generator, skip_mh: bool = False,
                          rw_scale: float = 0.03):
    """Joint (omega, log nu) Metropolis-Hastings refresh on a chain state.

    ``state`` is a ``ChainState`` with a current cache; returns
    (new omega, new log nu, accepted, alpha) without mutating the state.
    """
    if not config.is_negbin:
        raise ValueError("joint update requires the negative-binomial likelihood")
    omega_prop, log_nu_prop, accepted, alpha, _parts = _joint_step(
        state.cache, dataset, config, rng, state.log_nu, skip_mh, rw_scale
    )
    return omega_prop, log_nu_prop, accepted, alpha
