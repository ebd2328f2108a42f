"""Multi-chain orchestration and run summaries."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, ModelConfig
from .sampler import ChainResult, SamplerConfig, run_chains

__all__ = ["RunSummary", "fit"]


@dataclass
class RunSummary:
    """Aggregated estimates and bookkeeping for a (multi-chain) run.

    Coefficient summaries are conditional on inclusion: weighted moments of
    the per-iteration coefficient draws over exactly those iterations in
    which the covariate was part of the model (NaN when never included).
    Acceptance statistics cover post-burn-in proposals only.  With several
    adaptive chains ``xi_final`` is the across-chain mean; exact per-chain
    values live in ``per_chain``.
    """

    names: list[str]
    pips: list[float]
    beta_cond_mean: list[float]
    beta_cond_std: list[float]
    omega_accept_rate: float
    nu_posterior_mean: float | None
    nu_posterior_std: float | None
    xi_final: float
    i0_fraction: float
    wall_time: float
    seed: int
    chains: int
    model_config: dict
    sampler_config: dict
    per_chain: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _weighted_nu_stats(results: list[ChainResult]):
    num = 0.0
    sq = 0.0
    den = 0.0
    for r in results:
        if r.log_nus is None:
            return None, None
        nu = np.exp(r.log_nus)
        num += float(r.rho @ nu)
        sq += float(r.rho @ (nu * nu))
        den += float(r.rho_sum)
    mean = num / den
    var = max(sq / den - mean * mean, 0.0)
    return mean, math.sqrt(var)


def fit(
    dataset: Dataset,
    model_config: ModelConfig,
    sampler_config: SamplerConfig,
    chains: int = 1,
    record_betas: bool = True,
    keep_cond_pips: bool = False,
) -> tuple[RunSummary, list[ChainResult]]:
    """Run independent chains and pool their weighted samples.

    Unnormalized weights are directly comparable across chains, so pooling
    sums weight-numerator and weight-mass over all retained samples.
    """
    t0 = time.perf_counter()
    resolved = model_config.resolve(dataset)
    results = run_chains(
        dataset,
        resolved,
        sampler_config,
        chains=chains,
        record_betas=record_betas,
        keep_cond_pips=keep_cond_pips,
    )
    wall = time.perf_counter() - t0

    p = dataset.P
    rb_num = np.zeros(p)
    rho_sum = 0.0
    props = accepts = 0
    i0_num = i0_den = 0
    for r in results:
        rb_num += r.rb_num
        rho_sum += r.rho_sum
        props += r.omega_proposals
        accepts += r.omega_accepts
        i0_num += int((r.i_drawn == 0).sum())
        i0_den += r.i_drawn.size
    pips = rb_num / rho_sum

    if record_betas:
        bnum = sum(r.beta_num for r in results)
        bsq = sum(r.beta_sq_num for r in results)
        bw = sum(r.incl_weight for r in results)
        with np.errstate(invalid="ignore", divide="ignore"):
            bmean = np.where(bw > 0, bnum / np.where(bw > 0, bw, 1.0), np.nan)
            bvar = np.where(bw > 0, bsq / np.where(bw > 0, bw, 1.0) - bmean**2, np.nan)
        bstd = np.sqrt(np.maximum(bvar, 0.0))
        bstd = np.where(bw > 0, bstd, np.nan)
    else:
        bmean = np.full(p, np.nan)
        bstd = np.full(p, np.nan)

    nu_mean, nu_std = _weighted_nu_stats(results)
    summary = RunSummary(
        names=list(dataset.names),
        pips=[float(v) for v in pips],
        beta_cond_mean=[float(v) for v in bmean],
        beta_cond_std=[float(v) for v in bstd],
        omega_accept_rate=(accepts / props) if props else math.nan,
        nu_posterior_mean=nu_mean,
        nu_posterior_std=nu_std,
        xi_final=float(np.mean([r.xi_final for r in results])),
        i0_fraction=i0_num / i0_den,
        wall_time=wall,
        seed=sampler_config.seed,
        chains=chains,
        model_config={
            "likelihood": resolved.likelihood,
            "tau": resolved.tau,
            "tau_bias": resolved.tau_bias,
            "h": resolved.h,
            "psi0": resolved.psi0,
        },
        sampler_config={
            "variant": sampler_config.variant,
            "T": sampler_config.T,
            "T_burn": sampler_config.T_burn,
            "xi": sampler_config.xi,
            "epsilon": sampler_config.epsilon,
            "f_omega": sampler_config.f_omega,
            "anneal_frac": sampler_config.anneal_frac,
            "nu_rw_scale": sampler_config.nu_rw_scale,
            "seed": sampler_config.seed,
        },
        per_chain=[
            {
                "seed": r.seed,
                "xi_final": r.xi_final,
                "i0_fraction": r.i0_fraction,
                "omega_accept_rate": r.omega_accept_rate,
                "wall_time": r.wall_time,
                "mean_model_size": float(r.gamma_size.mean()),
            }
            for r in results
        ],
    )
    return summary, results
