#!/usr/bin/env python3
"""Simulate the consolidation SDE and check it against closed forms.

Runs an ensemble at the default parameters, prints the terminal mean
against the Beta stationary mean, the worst-case variance against the
sigma^2/(8*lambda) ceiling, and a KS test of the terminal samples
against the stationary CDF.
"""
import argparse
import sys

import numpy as np

from crystal_replay.analysis import ks_critical_value, ks_statistic
from crystal_replay.sde import (
    SdeParams,
    fixed_point,
    simulate_ensemble,
    stationary_beta,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--horizon", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--u-bar", type=float, default=0.5)
    ap.add_argument("--i-bar", type=float, default=0.1)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--beta", type=float, default=0.005)
    ap.add_argument("--sigma", type=float, default=0.005)
    args = ap.parse_args()

    params = SdeParams(alpha=args.alpha, beta=args.beta, sigma=args.sigma)
    law = stationary_beta(params, args.u_bar, args.i_bar)
    info = fixed_point(args.u_bar, args.i_bar, params)

    summary = simulate_ensemble(
        params, args.u_bar, args.i_bar, c0=law.mean,
        n_paths=args.paths, n_steps=args.horizon, seed=args.seed,
        checkpoint_every=max(1, args.horizon // 50),
    )

    term = np.sort(summary.terminal_samples)
    ks = ks_statistic(term, law.cdf)
    ks_crit = ks_critical_value(len(term), alpha=0.01)
    mean_err = abs(float(np.mean(term)) - law.mean)
    worst_var = float(np.max(summary.variances))
    ceiling = info.variance_ceiling

    checks = [
        ("terminal mean within 0.005 of Beta mean", mean_err, 0.005,
         mean_err <= 0.005),
        ("variance under sigma^2/(8 lambda) * 1.05", worst_var, ceiling * 1.05,
         worst_var <= ceiling * 1.05),
        ("KS statistic below 1% critical value", ks, ks_crit, ks < ks_crit),
    ]
    width = max(len(c[0]) for c in checks)
    ok = True
    for name, measured, bound, passed in checks:
        ok &= passed
        print(f"{name:<{width}}  measured={measured:.3e}  bound={bound:.3e}  "
              f"{'PASS' if passed else 'FAIL'}")
    print(f"fixed point c* = {info.c_star:.6f}, decay rate = {info.decay_rate:.6f}, "
          f"Beta({law.a_shape:.1f}, {law.b_shape:.1f})")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
