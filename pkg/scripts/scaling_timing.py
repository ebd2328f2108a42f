#!/usr/bin/env python3
"""Per-iteration cost sweep over the covariate count.

Times chains on synthetic binomial data with a fixed row count and a
moderately rich supported set, then fits a log-log slope of mean
per-iteration wall time against P.
"""

import argparse
import json
import sys
import time

import numpy as np

from countsel import ModelConfig, SamplerConfig, run_chain, simulate_binomial


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--ps", default="256,1024,4096")
    ap.add_argument("--actives", type=int, default=48)
    ap.add_argument("--beta", type=float, default=0.4)
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--iters", type=int, default=2500)
    ap.add_argument("--burnin", type=int, default=500)
    ap.add_argument("--f-omega", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    ps = [int(tok) for tok in args.ps.split(",")]
    active = list(range(args.actives))
    betas = [args.beta] * args.actives

    warm = simulate_binomial(args.n, ps[0], active, betas, C=args.count, seed=args.seed)
    run_chain(warm, ModelConfig(),
              SamplerConfig(T=300, T_burn=100, seed=args.seed, f_omega=args.f_omega))

    rows = []
    for p in ps:
        ds = simulate_binomial(args.n, p, active, betas, C=args.count,
                               seed=args.seed + p)
        sc = SamplerConfig(T=args.iters, T_burn=args.burnin,
                           seed=args.seed + p, f_omega=args.f_omega)
        t0 = time.perf_counter()
        res = run_chain(ds, ModelConfig(), sc)
        per_iter = (time.perf_counter() - t0) / sc.T
        rows.append({"P": p, "us_per_iter": per_iter * 1e6,
                     "mean_model_size": float(res.gamma_size.mean())})
        print(f"P={p}: {per_iter * 1e6:.0f} us/iter, |gamma| {res.gamma_size.mean():.1f}")

    slope = float(np.polyfit(np.log([r["P"] for r in rows]),
                             np.log([r["us_per_iter"] for r in rows]), 1)[0])
    print(f"log-log slope: {slope:.3f}")
    print(json.dumps({"slope": slope, "points": rows}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
