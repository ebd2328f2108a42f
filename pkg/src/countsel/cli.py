"""Command-line interface.

Subcommands: ``run`` fits a CSV dataset and writes pips.csv/summary.json
(plus optional trace.csv and samples.npz); ``simulate`` emits synthetic
datasets; ``oracle`` exhaustively enumerates the conditional posterior of
a small dataset; ``diagnose`` summarizes weights and computes predictive
calibration for a saved run.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path


def _jsonable(obj):
    """Recursively replace non-finite floats with None for strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    return obj

import numpy as np
from scipy.stats import kstest

from .data import ModelConfig
from .diagnostics import compute_pit, weight_summary
from .io import load_csv, write_dataset
from .oracle import enumerate_posterior
from .pg import pg_draw
from .runner import fit
from .sampler import SamplerConfig
from .simulate import simulate_correlated, simulate_negbin


def _add_model_flags(sub):
    sub.add_argument("--likelihood", choices=["binomial", "negbin"], default="binomial")
    sub.add_argument("--tau", type=float, default=0.01)
    sub.add_argument("--tau-bias", type=float, default=None)
    sub.add_argument("--h", type=float, default=None,
                     help="prior inclusion probability (default 5/P)")
    sub.add_argument("--psi0", type=float, default=None,
                     help="negative-binomial offset (default log mean response)")


def _add_data_flags(sub):
    sub.add_argument("--data", required=True, help="input CSV path")
    sub.add_argument("--response", required=True, help="response column name")
    sub.add_argument("--count-col", default=None, help="binomial total-count column")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="countsel")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="fit a dataset")
    _add_data_flags(run)
    _add_model_flags(run)
    run.add_argument("--variant", choices=["wgs", "tgs", "wtgs"], default="wtgs")
    run.add_argument("--iters", type=int, default=110_000, help="total iterations T")
    run.add_argument("--burnin", type=int, default=10_000)
    run.add_argument("--epsilon", type=float, default=5.0)
    run.add_argument("--xi", type=float, default=None,
                     help="fixed tempering mass (default: adapt; 0 freezes omega)")
    run.add_argument("--f-omega", type=float, default=0.25)
    run.add_argument("--anneal-frac", type=float, default=0.5)
    run.add_argument("--nu-rw-scale", type=float, default=0.03)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--chains", type=int, default=1)
    run.add_argument("--out-dir", required=True)
    run.add_argument("--trace", action="store_true", help="write trace.csv")
    run.add_argument("--save-samples", action="store_true",
                     help="write samples.npz for later diagnostics")
    run.add_argument("--thin-samples", type=int, default=1,
                     help="keep every k-th retained sample in samples.npz")

    sim = sub.add_parser("simulate", help="emit a synthetic dataset")
    sim.add_argument("--scenario", choices=["correlated", "negbin"], required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.add_argument("--active", default="1,2",
                     help="negbin scenario: 1-based true covariates, comma separated")
    sim.add_argument("--betas", default="0.6,-0.6")
    sim.add_argument("--nu", type=float, default=1.0)
    sim.add_argument("--psi0", type=float, default=1.0)

    orc = sub.add_parser("oracle", help="enumerate the conditional posterior (small P)")
    _add_data_flags(orc)
    _add_model_flags(orc)
    orc.add_argument("--seed", type=int, default=0,
                     help="seed for the conditioning omega draw")
    orc.add_argument("--nu", type=float, default=1.0,
                     help="dispersion at which to condition (negbin)")
    orc.add_argument("--out-dir", required=True)

    dia = sub.add_parser("diagnose", help="weight and calibration diagnostics")
    dia.add_argument("--run-dir", required=True)
    dia.add_argument("--test-data", default=None)
    dia.add_argument("--response", default=None)
    dia.add_argument("--count-col", default=None)
    dia.add_argument("--seed", type=int, default=0)
    dia.add_argument("--max-pit-samples", type=int, default=2000)
    dia.add_argument("--out-dir", default=None)
    return parser


def _write_pips_csv(path: Path, summary):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "pip", "beta_cond_mean", "beta_cond_std"])
        for name, pip, bm, bs in zip(
            summary.names, summary.pips, summary.beta_cond_mean, summary.beta_cond_std
        ):
            writer.writerow([name, repr(pip), repr(bm), repr(bs)])


def _write_trace(path: Path, results, is_negbin: bool):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "t", "rho_tilde", "gamma_size", "i_drawn", "log_nu"])
        for cid, r in enumerate(results):
            log_nus = r.log_nus if is_negbin else None
            for t in range(r.rho.size):
                writer.writerow([
                    cid,
                    r.T_burn + t + 1,
                    repr(float(r.rho[t])),
                    int(r.gamma_size[t]),
                    int(r.i_drawn[t]),
                    repr(float(log_nus[t])) if log_nus is not None else "",
                ])


def _write_samples(path: Path, results, thin: int, is_negbin: bool):
    rho, log_nu, gamma_flat, gamma_off, beta_flat, beta_off = [], [], [], [0], [], [0]
    for r in results:
        if r.betas is None:
            raise ValueError("samples.npz requires coefficient draws; rerun with betas")
        for t in range(0, r.rho.size, thin):
            rho.append(float(r.rho[t]))
            if is_negbin:
                log_nu.append(float(r.log_nus[t]))
            gamma_flat.extend(r.gammas[t])
            gamma_off.append(len(gamma_flat))
            beta_flat.extend(r.betas[t].tolist())
            beta_off.append(len(beta_flat))
    payload = {
        "rho": np.asarray(rho),
        "gamma_flat": np.asarray(gamma_flat, dtype=np.int32),
        "gamma_offsets": np.asarray(gamma_off, dtype=np.int64),
        "beta_flat": np.asarray(beta_flat),
        "beta_offsets": np.asarray(beta_off, dtype=np.int64),
    }
    if is_negbin:
        payload["log_nu"] = np.asarray(log_nu)
    np.savez_compressed(path, **payload)


def _cmd_run(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_csv(args.data, args.response, args.count_col, args.likelihood)
    model = ModelConfig(
        likelihood=args.likelihood,
        tau=args.tau,
        tau_bias=args.tau_bias,
        h=args.h,
        psi0=args.psi0,
    )
    sampler = SamplerConfig(
        variant=args.variant,
        T=args.iters,
        T_burn=args.burnin,
        xi=args.xi,
        epsilon=args.epsilon,
        f_omega=args.f_omega,
        seed=args.seed,
        anneal_frac=args.anneal_frac,
        nu_rw_scale=args.nu_rw_scale,
    )
    summary, results = fit(dataset, model, sampler, chains=args.chains)
    _write_pips_csv(out_dir / "pips.csv", summary)
    with (out_dir / "summary.json").open("w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary.to_dict()), fh, indent=2)
        fh.write("\n")
    is_negbin = args.likelihood == "negbin"
    if args.trace:
        _write_trace(out_dir / "trace.csv", results, is_negbin)
    if args.save_samples:
        _write_samples(out_dir / "samples.npz", results, max(args.thin_samples, 1), is_negbin)
    return 0


def _cmd_simulate(args) -> int:
    if args.scenario == "correlated":
        dataset, _ = simulate_correlated(args.n, args.p, args.seed)
    else:
        active = [int(tok) - 1 for tok in args.active.split(",") if tok]
        betas = [float(tok) for tok in args.betas.split(",") if tok]
        dataset = simulate_negbin(
            args.n, args.p, active, betas, nu=args.nu, psi0=args.psi0, seed=args.seed
        )
    write_dataset(dataset, args.out)
    return 0


def _cmd_oracle(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_csv(args.data, args.response, args.count_col, args.likelihood)
    model = ModelConfig(
        likelihood=args.likelihood,
        tau=args.tau,
        tau_bias=args.tau_bias,
        h=args.h,
        psi0=args.psi0,
    )
    rng = np.random.default_rng(args.seed)
    # conditioning omega drawn exactly as a chain with the same seed would
    if args.likelihood == "negbin":
        omega = pg_draw(dataset.Y + args.nu, 0.0, rng)
        nu = args.nu
    else:
        omega = pg_draw(dataset.C.astype(np.float64), 0.0, rng)
        nu = None
    pips, probs = enumerate_posterior(dataset, omega, model, nu=nu)
    with (out_dir / "oracle_pips.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "pip"])
        for name, pip in zip(dataset.names, pips):
            writer.writerow([name, repr(float(pip))])
    with (out_dir / "oracle_models.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_bitmask", "probability"])
        for mask in np.argsort(probs)[::-1]:
            writer.writerow([int(mask), repr(float(probs[mask]))])
    return 0


class _SampleView:
    __slots__ = ("rho_tilde", "gamma", "log_nu")

    def __init__(self, rho_tilde, gamma, log_nu):
        self.rho_tilde = rho_tilde
        self.gamma = gamma
        self.log_nu = log_nu


def _cmd_diagnose(args) -> int:
    run_dir = Path(args.run_dir)
    out_dir = Path(args.out_dir) if args.out_dir else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    with (run_dir / "summary.json").open(encoding="utf-8") as fh:
        summary = json.load(fh)
    sampler_cfg = summary["sampler_config"]
    likelihood = summary["model_config"]["likelihood"]
    diag: dict = {
        "omega_accept_rate": summary["omega_accept_rate"],
        "i0_fraction": summary["i0_fraction"],
        "xi_final": summary["xi_final"],
    }

    trace_path = run_dir / "trace.csv"
    if trace_path.exists():
        chains_col = []
        rho = []
        with trace_path.open(encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                chains_col.append(int(row["chain"]))
                rho.append(float(row["rho_tilde"]))
        rho = np.asarray(rho)
        chains_col = np.asarray(chains_col)
        diag["weights"] = weight_summary(rho)
        variant = sampler_cfg["variant"]
        if variant in ("tgs", "wtgs"):
            # adapted chains end at different tempering masses, so each
            # chain's weights are checked against its own bound
            eps_term = (
                0.5 if variant == "tgs"
                else sampler_cfg["epsilon"] / (2 * len(summary["names"]))
            )
            bounds = [1.0 / (pc["xi_final"] + eps_term) for pc in summary["per_chain"]]
            diag["weights"]["bounds_per_chain"] = bounds
            diag["weights"]["bound_satisfied"] = bool(
                all(
                    np.all(rho[chains_col == cid] <= bound)
                    for cid, bound in enumerate(bounds)
                )
            )

    samples_path = run_dir / "samples.npz"
    if args.test_data is not None:
        if args.response is None:
            print("diagnose: --test-data requires --response", file=sys.stderr)
            return 1
        if not samples_path.exists():
            print("diagnose: PIT requires samples.npz (rerun with --save-samples)",
                  file=sys.stderr)
            return 1
        test = load_csv(args.test_data, args.response, args.count_col, likelihood)
        with np.load(samples_path) as payload:
            rho = payload["rho"]
            g_flat = payload["gamma_flat"]
            g_off = payload["gamma_offsets"]
            b_flat = payload["beta_flat"]
            b_off = payload["beta_offsets"]
            log_nu = payload["log_nu"] if "log_nu" in payload.files else None
        total = rho.size
        step = max(1, total // args.max_pit_samples)
        samples = []
        betas = []
        for t in range(0, total, step):
            gamma = tuple(int(j) for j in g_flat[g_off[t]:g_off[t + 1]])
            beta = b_flat[b_off[t]:b_off[t + 1]]
            samples.append(_SampleView(float(rho[t]), gamma,
                                       float(log_nu[t]) if log_nu is not None else None))
            betas.append(beta)
        model = ModelConfig(
            likelihood=likelihood,
            tau=summary["model_config"]["tau"],
            tau_bias=summary["model_config"]["tau_bias"],
            h=summary["model_config"]["h"],
            psi0=summary["model_config"]["psi0"],
        )
        rng = np.random.default_rng(args.seed)
        pit = compute_pit(samples, betas, test, rng, model)
        with (out_dir / "pit.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "pit"])
            for i, v in enumerate(pit):
                writer.writerow([i, repr(float(v))])
        stat, pval = kstest(pit, "uniform")
        diag["pit"] = {
            "n": int(pit.size),
            "ks_statistic": float(stat),
            "ks_pvalue": float(pval),
        }

    with (out_dir / "diagnostics.json").open("w", encoding="utf-8") as fh:
        json.dump(_jsonable(diag), fh, indent=2)
        fh.write("\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        return _cmd_diagnose(args)
    except (ValueError, OSError) as exc:
        print(f"countsel {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
