"""Tempered-flip Markov chains over inclusion vectors with importance
reweighting.

Each iteration draws an auxiliary arm i in {0, 1, ..., P}: arm 0 refreshes
the augmentation variables omega (and the dispersion, for the negative
binomial), arm j >= 1 updates the inclusion indicator of covariate j.
Under the tempered variants (TGS, wTGS) the indicator update is a
deterministic flip accepted with probability one; the wGS variant instead
accepts the flip with the binary Metropolized-Gibbs probability.

The tempering makes the chain sample an auxiliary target whose gamma
marginal is proportional to p(gamma, omega | data) * phi(gamma, omega),

    phi = xi + (1/P) sum_j eta_j / (2 p(gamma_j | gamma_-j, omega, data))

(for wGS, phi = xi + mean_j eta_j), so every retained sample carries the
unnormalized importance weight rho = 1/phi.  For TGS (eta = 1) the weight
is bounded by (xi + 1/2)^-1 and for wTGS (eta_j = conditional PIP + eps/P)
by (xi + eps/(2P))^-1, which keeps the estimator variance moderate.

Posterior inclusion probabilities are estimated in Rao-Blackwellized form:
the weighted average of per-iteration conditional inclusion probabilities
rather than of the indicators themselves.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import negbin as nb
from .data import Dataset, ModelConfig
from .glm import (
    PROB_CEIL,
    PROB_FLOOR,
    CholeskyCache,
    InclusionState,
    augmented_design,
    conditional_pips,
    _chol_or_name,
    _tri_lower_solve,
    _tri_upper_from_lower_solve,
)
from .pg import pg_draw

__all__ = [
    "SamplerConfig",
    "ChainState",
    "WeightedSample",
    "ChainResult",
    "eta",
    "phi",
    "sample_i",
    "flip",
    "mg_accept",
    "omega_update",
    "adapt_xi",
    "run_chain",
    "rao_blackwell_pips",
]

VARIANTS = ("wgs", "tgs", "wtgs")
XI_INIT = 5.0
XI_FLOOR = 1e-3
REBUILD_EVERY = 1000  # full refactorization cadence, in accepted flips


@dataclass(frozen=True)
class SamplerConfig:
    """Chain variant, length, and tempering hyperparameters.

    ``xi = None`` requests adaptation during burn-in toward an omega-update
    fraction of ``f_omega``; a fixed ``xi`` disables adaptation, and
    ``xi = 0`` freezes omega entirely (arm 0 then has probability zero).
    """

    variant: str = "wtgs"
    T: int = 110_000
    T_burn: int = 10_000
    xi: float | None = None
    epsilon: float = 5.0
    f_omega: float = 0.25
    seed: int = 0
    anneal_frac: float = 0.5
    nu_rw_scale: float = 0.03

    def __post_init__(self):
        canon = self.variant.lower()
        if canon not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        object.__setattr__(self, "variant", canon)
        if not (self.T > self.T_burn >= 0):
            raise ValueError(f"need T > T_burn >= 0, got T={self.T}, T_burn={self.T_burn}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.f_omega < 1.0:
            raise ValueError(f"f_omega must lie in (0, 1), got {self.f_omega}")
        if self.xi is not None and self.xi < 0:
            raise ValueError(f"xi must be nonnegative, got {self.xi}")
        if not 0.0 <= self.anneal_frac <= 1.0:
            raise ValueError(f"anneal_frac must lie in [0, 1], got {self.anneal_frac}")
        if self.nu_rw_scale < 0:
            raise ValueError(f"nu_rw_scale must be nonnegative, got {self.nu_rw_scale}")


@dataclass
class ChainState:
    """Mutable snapshot of a running chain."""

    gamma: InclusionState
    omega: np.ndarray
    log_nu: float | None
    xi: float
    iteration: int
    cache: CholeskyCache
    cond_pips: np.ndarray


@dataclass(frozen=True)
class WeightedSample:
    """One retained draw: unnormalized weight, conditional-PIP snapshot,
    sparse inclusion set, dispersion, and the arm that produced it."""

    rho_tilde: float
    cond_pips: np.ndarray
    gamma: tuple[int, ...]
    log_nu: float | None
    i_drawn: int


def eta(cond_pip_1: float, P: int, variant: str, epsilon: float = 5.0) -> float:
    """Arm-selection weight for one covariate: 1 under TGS, conditional
    PIP plus eps/P under the weighted variants."""
    if variant.lower() == "tgs":
        return 1.0
    return cond_pip_1 + epsilon / P


def _phi_terms(
    cond_pips: np.ndarray, gamma_mask: np.ndarray, variant: str, eps_over_p: float
) -> np.ndarray:
    """Per-covariate arm masses times P (phi = xi + mean of these)."""
    if variant == "wgs":
        return cond_pips + eps_over_p  # no tempering ratio
    p_cur = np.where(gamma_mask, cond_pips, 1.0 - cond_pips)
    if not p_cur.min() > 0.0:
        warnings.warn(
            "conditional probability of the current state underflowed to 0; clamping",
            RuntimeWarning,
        )
    np.minimum(p_cur, PROB_CEIL, out=p_cur)
    np.maximum(p_cur, PROB_FLOOR, out=p_cur)
    if variant == "tgs":
        return 0.5 / p_cur
    return (0.5 * (cond_pips + eps_over_p)) / p_cur


def phi(state: ChainState, config: SamplerConfig) -> float:
    """Total auxiliary mass xi + (1/P) sum_j of the arm terms."""
    p = state.gamma.P
    terms = _phi_terms(
        state.cond_pips, state.gamma.gamma(), config.variant, config.epsilon / p
    )
    return state.xi + float(np.sum(terms)) / p


def sample_i(
    state: ChainState, config: SamplerConfig, rng: np.random.Generator
) -> int:
    """Draw the auxiliary arm; 0 refreshes omega, j >= 1 targets covariate j."""
    p = state.gamma.P
    terms = _phi_terms(
        state.cond_pips, state.gamma.gamma(), config.variant, config.epsilon / p
    )
    cum = np.cumsum(terms)
    phi_val = state.xi + cum[-1] / p
    u = rng.random() * phi_val
    if u < state.xi:
        return 0
    return min(p, 1 + int(np.searchsorted(cum, (u - state.xi) * p, side="right")))


def flip(gamma: InclusionState, i: int) -> InclusionState:
    """Flip covariate arm i (1-based, matching the auxiliary index)."""
    if not 1 <= i <= gamma.P:
        raise ValueError(f"arm index must lie in [1, {gamma.P}], got {i}")
    return gamma.with_flipped(i - 1)


def mg_accept(q: float, x: int) -> float:
    """Metropolized-Gibbs acceptance for a binary flip when the conditional
    probability of value 1 is q."""
    if x:
        return min(1.0, (1.0 - q) / q)
    return min(1.0, q / (1.0 - q))


def adapt_xi(xi_t: float, phi_t: float, t: int, f_omega: float) -> float:
    """Stochastic-approximation step driving the arm-0 visit fraction
    xi/phi toward f_omega; t counts completed adaptations."""
    return max(xi_t + (f_omega - xi_t / phi_t) / math.sqrt(t + 1), XI_FLOOR)


def _omega_log_alpha_parts(
    cache: CholeskyCache, dataset: Dataset, omega_prop: np.ndarray
):
    """Log MH ratio for the binomial omega refresh: marginal-likelihood
    ratio, crossed gaussianized-factor ratio at the conditional posterior
    means, and the exact binomial likelihood ratio at those means.

    Also returns the proposal-side factorization for reuse on acceptance.
    """
    y = dataset.Y
    c = dataset.C
    omega = cache.omega
    kap = cache.kappa_vec
    xact = cache.active_design()

    psih = xact @ cache.beta_hat()
    a2 = (xact * omega_prop[:, None]).T @ xact
    a2[np.diag_indices_from(a2)] += cache.tau_vec
    l2 = _chol_or_name(a2, cache.order, dataset.names)
    z_i = cache.Zfull[cache.order]
    zt2 = _tri_lower_solve(l2, z_i)
    r1 = 0.5 * (float(zt2 @ zt2) - float(cache.Ztilde @ cache.Ztilde)) - (
        float(np.log(np.diagonal(l2)).sum()) - 0.5 * cache.logdet
    )
    bhat2 = _tri_upper_from_lower_solve(l2, zt2)
    psih2 = xact @ bhat2
    r2 = (float(kap @ psih2) - 0.5 * float(omega @ psih2**2)) - (
        float(kap @ psih) - 0.5 * float(omega_prop @ psih**2)
    )
    r3 = (float(y @ psih) - float(c @ np.logaddexp(0.0, psih))) - (
        float(y @ psih2) - float(c @ np.logaddexp(0.0, psih2))
    )
    return r1 + r2 + r3, a2, l2, zt2


def _omega_log_alpha(
    cache: CholeskyCache, dataset: Dataset, omega_prop: np.ndarray
) -> float:
    return _omega_log_alpha_parts(cache, dataset, omega_prop)[0]


def _omega_step(
    cache: CholeskyCache,
    dataset: Dataset,
    c_float: np.ndarray,
    rng: np.random.Generator,
    skip_mh: bool,
):
    """One binomial omega proposal.

    Returns (omega_prop, accepted, alpha, parts); ``parts`` holds the
    proposal-side (A, L, Ztilde) when the MH ratio was evaluated.
    """
    psih = cache.psi_hat()
    omega_prop = pg_draw(c_float, psih, rng)
    if skip_mh:
        return omega_prop, True, 1.0, None
    log_alpha, a2, l2, zt2 = _omega_log_alpha_parts(cache, dataset, omega_prop)
    if not math.isfinite(log_alpha):
        warnings.warn(
            "non-finite acceptance ratio in omega refresh; rejecting", RuntimeWarning
        )
        return omega_prop, False, math.nan, None
    alpha = math.exp(min(log_alpha, 0.0))
    return omega_prop, rng.random() < alpha, alpha, (a2, l2, zt2)


def omega_update(
    state: ChainState,
    config: ModelConfig,
    dataset: Dataset,
    rng: np.random.Generator,
    skip_mh: bool = False,
):
    """Public omega refresh on a chain state (binomial likelihood).

    Returns (new omega, accepted, alpha) without mutating the state.
    """
    if config.is_negbin:
        raise ValueError("use the joint (omega, log nu) update for the negative binomial")
    omega_prop, accepted, alpha, _parts = _omega_step(
        state.cache, dataset, dataset.C.astype(np.float64), rng, skip_mh
    )
    return omega_prop, accepted, alpha


@dataclass
class ChainResult:
    """Retained-sample record and summary statistics of one chain."""

    variant: str
    seed: int
    T: int
    T_burn: int
    P: int
    rho: np.ndarray
    i_drawn: np.ndarray
    gamma_size: np.ndarray
    gammas: list[tuple[int, ...]]
    rb_num: np.ndarray
    rho_sum: float
    omega_final: np.ndarray
    xi_final: float
    adapted: bool
    omega_proposals: int
    omega_accepts: int
    wall_time: float
    log_nus: np.ndarray | None = None
    cond_pips: np.ndarray | None = None
    betas: list[np.ndarray] | None = None
    beta_num: np.ndarray | None = None
    beta_sq_num: np.ndarray | None = None
    incl_weight: np.ndarray | None = None
    final_state: ChainState | None = field(default=None, repr=False)

    @property
    def pips(self) -> np.ndarray:
        return self.rb_num / self.rho_sum

    @property
    def i0_fraction(self) -> float:
        return float(np.mean(self.i_drawn == 0))

    @property
    def omega_accept_rate(self) -> float:
        if self.omega_proposals == 0:
            return math.nan
        return self.omega_accepts / self.omega_proposals

    def weighted_samples(self) -> list[WeightedSample]:
        if self.cond_pips is None:
            raise ValueError("run the chain with keep_cond_pips=True to materialize samples")
        log_nus = self.log_nus
        return [
            WeightedSample(
                rho_tilde=float(self.rho[t]),
                cond_pips=self.cond_pips[t],
                gamma=self.gammas[t],
                log_nu=None if log_nus is None else float(log_nus[t]),
                i_drawn=int(self.i_drawn[t]),
            )
            for t in range(self.rho.size)
        ]


def rao_blackwell_pips(samples) -> np.ndarray:
    """Weighted average of conditional-PIP snapshots over retained samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one retained sample")
    num = np.zeros_like(np.asarray(samples[0].cond_pips, dtype=np.float64))
    den = 0.0
    for s in samples:
        num += s.rho_tilde * np.asarray(s.cond_pips, dtype=np.float64)
        den += s.rho_tilde
    return num / den


def run_chain(
    dataset: Dataset,
    model_config: ModelConfig,
    sampler_config: SamplerConfig,
    rng: np.random.Generator | None = None,
    *,
    record_betas: bool = False,
    keep_cond_pips: bool = False,
) -> ChainResult:
    """Run one chain and return its retained-sample record.

    Starts from the empty inclusion vector with omega drawn from its base
    law, iterates arm draws and the matching updates, and normalizes the
    retained weights at the end.  A rejected move never aborts the chain.
    Per-iteration inclusion-set snapshots are recorded only when samples
    or coefficient draws are kept; summary statistics are always recorded.
    """
    t_start = time.perf_counter()
    cfg = model_config.resolve(dataset)
    sc = sampler_config
    if rng is None:
        rng = np.random.default_rng(sc.seed)
    is_negbin = cfg.is_negbin
    n, p = dataset.N, dataset.P
    y = dataset.Y
    c_float = dataset.C.astype(np.float64)
    xbar = augmented_design(dataset.X)
    xbar_sq = xbar * xbar

    log_nu = 0.0 if is_negbin else None
    if is_negbin:
        omega = pg_draw(y + nb.NU_INIT, 0.0, rng)
    else:
        omega = pg_draw(c_float, 0.0, rng)

    cache = CholeskyCache(
        InclusionState.empty(p),
        omega,
        dataset,
        cfg,
        nu=math.exp(log_nu) if is_negbin else None,
        xbar=xbar,
        xbar_sq=xbar_sq,
    )
    xi = XI_INIT if sc.xi is None else sc.xi
    adapting = sc.xi is None
    variant = sc.variant
    eps_over_p = sc.epsilon / p
    anneal_end = int(sc.anneal_frac * sc.T_burn)
    t_total, t_burn = sc.T, sc.T_burn
    kept = t_total - t_burn

    gamma_mask = np.zeros(p, dtype=bool)
    cond = conditional_pips(cache.state, cache, omega, dataset, cfg, nu=_nu(log_nu))
    terms = _phi_terms(cond, gamma_mask, variant, eps_over_p)
    cum = np.cumsum(terms)
    s_mean = cum[-1] / p

    rho_out = np.empty(kept)
    i_out = np.empty(kept, dtype=np.int32)
    gs_out = np.empty(kept, dtype=np.int32)
    lognu_out = np.empty(kept) if is_negbin else None
    cond_out = np.empty((kept, p)) if keep_cond_pips else None
    record_gammas = record_betas or keep_cond_pips
    gammas: list[tuple[int, ...]] = []
    betas: list[np.ndarray] | None = [] if record_betas else None
    rb_num = np.zeros(p)
    rho_sum = 0.0
    beta_num = np.zeros(p) if record_betas else None
    beta_sq_num = np.zeros(p) if record_betas else None
    incl_weight = np.zeros(p) if record_betas else None
    om_props = 0
    om_accepts = 0
    flips_since_rebuild = 0

    for t in range(1, t_total + 1):
        phi_val = xi + s_mean
        u = rng.random() * phi_val
        if u < xi:
            i_drawn = 0
            skip_mh = t <= anneal_end
            if is_negbin:
                omega_prop, log_nu_prop, accepted, _alpha, parts = nb._joint_step(
                    cache, dataset, cfg, rng, log_nu, skip_mh, sc.nu_rw_scale
                )
            else:
                omega_prop, accepted, _alpha, parts = _omega_step(
                    cache, dataset, c_float, rng, skip_mh
                )
            if t > t_burn:
                om_props += 1
                om_accepts += accepted
            if accepted:
                omega = omega_prop
                if is_negbin:
                    log_nu = log_nu_prop
                if parts is None:
                    cache.set_omega(omega, nu=_nu(log_nu))
                elif is_negbin:
                    a2, l2, zt2, kap_eff = parts
                    cache.adopt_omega(
                        omega, a2, l2, zt2, nu=_nu(log_nu), kappa_vec=kap_eff
                    )
                else:
                    a2, l2, zt2 = parts
                    cache.adopt_omega(omega, a2, l2, zt2)
                cond = conditional_pips(cache.state, cache, omega, dataset, cfg, nu=_nu(log_nu))
                terms = _phi_terms(cond, gamma_mask, variant, eps_over_p)
                cum = np.cumsum(terms)
                s_mean = cum[-1] / p
        else:
            i_drawn = min(p, 1 + int(np.searchsorted(cum, (u - xi) * p, side="right")))
            j = i_drawn - 1
            do_flip = True
            if variant == "wgs":
                q = cond[j]
                ratio = (1.0 - q) / q if gamma_mask[j] else q / (1.0 - q)
                do_flip = rng.random() < ratio
            if do_flip:
                cache.flip(j)
                gamma_mask[j] = ~gamma_mask[j]
                flips_since_rebuild += 1
                if flips_since_rebuild >= REBUILD_EVERY:
                    cache._rebuild()
                    flips_since_rebuild = 0
                cond = conditional_pips(cache.state, cache, omega, dataset, cfg, nu=_nu(log_nu))
                terms = _phi_terms(cond, gamma_mask, variant, eps_over_p)
                cum = np.cumsum(terms)
                s_mean = cum[-1] / p

        if t > t_burn:
            idx = t - t_burn - 1
            rho = 1.0 / (xi + s_mean)
            rho_out[idx] = rho
            i_out[idx] = i_drawn
            gs_out[idx] = len(cache.order) - 1
            rb_num += rho * cond
            rho_sum += rho
            if record_gammas:
                gammas.append(tuple(cache.order[1:]))
            if keep_cond_pips:
                cond_out[idx] = cond
            if is_negbin:
                lognu_out[idx] = log_nu
            if record_betas:
                beta = cache.sample_beta(rng)
                betas.append(beta)
                for pos, jj in enumerate(cache.order[1:]):
                    v = beta[pos + 1]
                    beta_num[jj] += rho * v
                    beta_sq_num[jj] += rho * v * v
                    incl_weight[jj] += rho
        elif adapting:
            xi = adapt_xi(xi, xi + s_mean, t - 1, sc.f_omega)

    final_state = ChainState(
        gamma=cache.state,
        omega=omega,
        log_nu=log_nu,
        xi=xi,
        iteration=t_total,
        cache=cache,
        cond_pips=cond,
    )
    return ChainResult(
        variant=variant,
        seed=sc.seed,
        T=t_total,
        T_burn=t_burn,
        P=p,
        rho=rho_out,
        i_drawn=i_out,
        gamma_size=gs_out,
        gammas=gammas,
        rb_num=rb_num,
        rho_sum=rho_sum,
        omega_final=omega,
        xi_final=xi,
        adapted=adapting,
        omega_proposals=om_props,
        omega_accepts=om_accepts,
        wall_time=time.perf_counter() - t_start,
        log_nus=lognu_out,
        cond_pips=cond_out,
        betas=betas,
        beta_num=beta_num,
        beta_sq_num=beta_sq_num,
        incl_weight=incl_weight,
        final_state=final_state,
    )


def _nu(log_nu: float | None) -> float | None:
    return None if log_nu is None else math.exp(log_nu)


def chain_seed(seed: int, chain_id: int) -> int:
    """Per-chain seed derivation; documented constant so multi-chain runs
    are reproducible chain by chain."""
    return seed + 10_007 * chain_id


def run_chains(
    dataset: Dataset,
    model_config: ModelConfig,
    sampler_config: SamplerConfig,
    chains: int = 1,
    **kwargs,
) -> list[ChainResult]:
    """Run several independent chains with seeds derived from the base seed."""
    out = []
    for cid in range(chains):
        sc = replace(sampler_config, seed=chain_seed(sampler_config.seed, cid))
        out.append(run_chain(dataset, model_config, sc, **kwargs))
    return out
