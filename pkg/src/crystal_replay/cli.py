"""Experiment runner.

Subcommands:
  sde-ensemble  simulate the crystallization SDE ensemble and validate
                the stationary mean/variance against the closed forms
  fp-solve      evolve the probability density and report the L1 error
                against the closed-form stationary law
  continual     run the continual gridworld suite for one method over a
                seed list, emitting metrics CSVs and an aggregate JSON
  calc          print closed-form quantities (fixed point, stationary
                shapes, occupancy, capacity and error bounds)

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 usage/input error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy

from . import __version__
from .agent import (
    EPISODE_CSV_HEADER,
    Ablation,
    RunResult,
    run_agent,
    run_baseline,
)
from .config import ConfigError, RunConfig, default_config, load_config
from .envs import make_reward_flip_sequence
from .fp import DensityGrid, fp_evolve, fp_stationary_error
from .memory import optimal_crystal_fraction, capacity_bound, qlearning_error_bound
from .sde import (
    fixed_point,
    mean_trajectory,
    phase_occupancy,
    simulate_ensemble,
    stationary_beta,
)

METHODS = ("amc", "vanilla", "prioritized")


def _error_exit(message: str, code: int = 2) -> int:
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(command: str, cfg: RunConfig, extra: dict) -> dict:
    return {
        "command": command,
        "config": cfg.to_dict(),
        "versions": {
            "crystal_replay": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        **extra,
    }


# -- sde-ensemble -----------------------------------------------------------

def cmd_sde_ensemble(args) -> int:
    cfg = load_config(args.config) if args.config else default_config()
    os.makedirs(args.out, exist_ok=True)
    summary = simulate_ensemble(
        cfg.sde, args.u_bar, args.i_bar, c0=args.c0,
        n_paths=args.paths, n_steps=args.horizon, seed=args.seed,
        checkpoint_every=max(1, args.horizon // 100),
    )
    with open(os.path.join(args.out, "ensemble.csv"), "w") as fh:
        fh.write("time,mean,variance\n")
        for t, m, v in zip(summary.checkpoints, summary.means, summary.variances):
            fh.write(f"{t},{m!r},{v!r}\n")
    np.savetxt(os.path.join(args.out, "terminal_samples.csv"),
               summary.terminal_samples, header="c", comments="")

    fp_info = fixed_point(args.u_bar, args.i_bar, cfg.sde)
    verdicts = []
    term_mean = float(np.mean(summary.terminal_samples))
    term_var = float(np.var(summary.terminal_samples))
    if cfg.sde.sigma == 0.0:
        ode = mean_trajectory(args.c0, fp_info, args.horizon * cfg.sde.dt)
        verdicts.append({
            "check": "deterministic_limit_matches_mean_trajectory",
            "measured": term_mean, "target": ode,
            "pass": bool(abs(term_mean - ode) < 1e-9 and term_var == 0.0),
        })
    else:
        law = stationary_beta(cfg.sde, args.u_bar, args.i_bar)
        verdicts.append({
            "check": "terminal_mean_near_fixed_point",
            "measured": term_mean, "target": law.mean, "tolerance": 0.005,
            "pass": bool(abs(term_mean - law.mean) <= 0.005),
        })
        ceiling = fp_info.variance_ceiling * 1.05
        worst = float(max(summary.variances))
        verdicts.append({
            "check": "variance_under_ceiling",
            "measured": worst, "bound": ceiling,
            "pass": bool(worst <= ceiling),
        })
    ok = all(v["pass"] for v in verdicts)
    _write_json(os.path.join(args.out, "verdict.json"),
                {"pass": ok, "verdicts": verdicts})
    _write_json(os.path.join(args.out, "manifest.json"),
                _manifest("sde-ensemble", cfg, {
                    "seed": args.seed, "paths": args.paths,
                    "horizon": args.horizon,
                    "u_bar": args.u_bar, "i_bar": args.i_bar, "c0": args.c0,
                }))
    return 0 if ok else 1


# -- fp-solve ---------------------------------------------------------------

def cmd_fp_solve(args) -> int:
    cfg = load_config(args.config) if args.config else default_config()
    os.makedirs(args.out, exist_ok=True)
    initial = DensityGrid.uniform(args.nodes)
    final = fp_evolve(initial, cfg.sde, args.u_bar, args.i_bar, args.t_final)
    final.to_csv(os.path.join(args.out, "density.csv"))
    law = stationary_beta(cfg.sde, args.u_bar, args.i_bar)
    err = fp_stationary_error(final, law)
    ok = bool(err < args.tol)
    _write_json(os.path.join(args.out, "verdict.json"), {
        "pass": ok,
        "verdicts": [{"check": "stationary_l1_error", "measured": err,
                      "bound": args.tol, "pass": ok}],
    })
    _write_json(os.path.join(args.out, "manifest.json"),
                _manifest("fp-solve", cfg, {
                    "nodes": args.nodes, "t_final": args.t_final,
                    "u_bar": args.u_bar, "i_bar": args.i_bar, "tol": args.tol,
                }))
    return 0 if ok else 1


# -- continual --------------------------------------------------------------

def run_continual_method(cfg: RunConfig, method: str, seed: int,
                         ablation: Ablation = Ablation()) -> RunResult:
    seq = make_reward_flip_sequence(
        n_tasks=cfg.suite.n_tasks,
        grid=(cfg.suite.grid_height, cfg.suite.grid_width),
        seed=cfg.suite.permutation_seed,
        max_steps=cfg.suite.max_steps,
        goal_reward=cfg.suite.goal_reward,
    )
    if method == "amc":
        return run_agent(
            seq, cfg.agent, cfg.sde, cfg.weights, cfg.interference,
            cfg.thresholds, cfg.sampling, cfg.buffer.capacities,
            seed=seed, k=cfg.buffer.knn_k, ablation=ablation,
        )
    return run_baseline(
        method, seq, cfg.agent, seed=seed,
        buffer_size=sum(cfg.buffer.capacities),
        batch_size=cfg.sampling.batch_size,
        priority_exponent=cfg.sampling.priority_exponent_liquid,
        is_exponent=cfg.sampling.is_exponent,
    )


def _continual_worker(payload):
    cfg_doc, method, seed, ablation_kwargs = payload
    from .config import config_from_dict
    cfg = config_from_dict({"defaults": cfg_doc})
    result = run_continual_method(cfg, method, seed, Ablation(**ablation_kwargs))
    return seed, result.metrics.to_dict(), result.episode_rows, result.eval_matrix


def _format_row(row: dict) -> str:
    return (f"{row['step']},{row['task']},{row['return']!r},"
            f"{row['n_liquid']},{row['n_glass']},{row['n_crystal']},"
            f"{row['mean_c_liquid']!r},{row['mean_c_glass']!r},"
            f"{row['mean_c_crystal']!r}")


def cmd_continual(args) -> int:
    cfg = load_config(args.config) if args.config else default_config()
    seeds = _parse_seeds(args)
    if args.method not in METHODS:
        raise ConfigError(f"unknown method {args.method!r}")
    ablation_kwargs = {
        "no_crystallization": args.no_crystallization,
        "no_lr_modulation": args.no_lr_modulation,
        "no_interference": args.no_interference,
        "w2_zero": args.w2_zero,
        "w3_zero": args.w3_zero,
        "single_buffer": args.single_buffer,
        "sigma_zero": args.sigma_zero,
        "random_v": args.random_v,
    }
    os.makedirs(args.out, exist_ok=True)
    payloads = [(cfg.to_dict(), args.method, s, ablation_kwargs) for s in seeds]
    if args.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_continual_worker, payloads))
    else:
        results = [_continual_worker(p) for p in payloads]
    results.sort(key=lambda r: r[0])

    per_seed = {}
    for seed, metrics, rows, eval_matrix in results:
        path = os.path.join(args.out, f"metrics_{args.method}_seed{seed}.csv")
        with open(path, "w") as fh:
            fh.write(EPISODE_CSV_HEADER + "\n")
            for row in rows:
                fh.write(_format_row(row) + "\n")
        per_seed[str(seed)] = {"metrics": metrics, "eval_matrix": eval_matrix}

    metric_names = ("average_performance", "backward_transfer",
                    "forward_transfer", "task1_retention")
    means = {}
    for name in metric_names:
        vals = [per_seed[str(s)]["metrics"][name] for s in seeds]
        means[name] = (float(np.mean(vals))
                       if all(v is not None for v in vals) else None)
    aggregate = {"method": args.method, "seeds": list(seeds),
                 "ablation": ablation_kwargs,
                 "per_seed": per_seed, "mean": means}
    _write_json(os.path.join(args.out, f"aggregate_{args.method}.json"), aggregate)
    _write_json(os.path.join(args.out, "manifest.json"),
                _manifest("continual", cfg, {
                    "method": args.method, "seeds": list(seeds),
                    "ablation": ablation_kwargs,
                }))
    return 0


# -- calc -------------------------------------------------------------------

def cmd_calc(args) -> int:
    cfg = load_config(args.config) if args.config else default_config()
    sde = cfg.sde
    if args.query == "fixed-point":
        fp = fixed_point(args.u_bar, args.i_bar, sde)
        out = {"c_star": fp.c_star, "decay_rate": fp.decay_rate,
               "variance_ceiling": fp.variance_ceiling}
    elif args.query == "stationary":
        law = stationary_beta(sde, args.u_bar, args.i_bar)
        out = {"a_shape": law.a_shape, "b_shape": law.b_shape,
               "mean": law.mean, "variance": law.variance}
    elif args.query == "occupancy":
        from .sde import BetaStationary
        pi = phase_occupancy(BetaStationary(args.a_shape, args.b_shape),
                             cfg.thresholds.tau_l, cfg.thresholds.tau_c)
        out = {"liquid": pi[0], "glass": pi[1], "crystal": pi[2]}
    elif args.query == "fstar":
        out = {"f_c_star": optimal_crystal_fraction(sde, args.u_bar, args.i_bar)}
    elif args.query == "capacity":
        out = {"n_total": capacity_bound(
            args.epsilon, args.delta, args.gamma, args.lipschitz,
            args.r_max, args.sa_count, args.f_c)}
    elif args.query == "qbound":
        out = {"q_error": qlearning_error_bound(
            args.gamma, args.r_max, args.lipschitz, args.f_c, args.n_c)}
    else:
        raise ConfigError(f"unknown calc query {args.query!r}")
    print(json.dumps(out, sort_keys=True))
    return 0


# -- parsing ----------------------------------------------------------------

def _parse_seeds(args) -> list[int]:
    if args.seeds:
        try:
            lo, hi = args.seeds.split("..")
            lo, hi = int(lo), int(hi)
        except ValueError as exc:
            raise ConfigError("--seeds expects the form A..B") from exc
        if hi < lo:
            raise ConfigError("--seeds range must be non-decreasing")
        return list(range(lo, hi + 1))
    return [args.seed]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crystal-replay",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    se = sub.add_parser("sde-ensemble", help="simulate and validate the SDE")
    se.add_argument("--config", default=None)
    se.add_argument("--paths", type=int, default=10_000)
    se.add_argument("--horizon", type=int, default=2000)
    se.add_argument("--seed", type=int, default=0)
    se.add_argument("--c0", type=float, default=0.5)
    se.add_argument("--u-bar", type=float, default=0.5)
    se.add_argument("--i-bar", type=float, default=0.1)
    se.add_argument("--out", required=True)
    se.set_defaults(func=cmd_sde_ensemble)

    fp = sub.add_parser("fp-solve", help="evolve the probability density")
    fp.add_argument("--config", default=None)
    fp.add_argument("--nodes", type=int, default=1000)
    fp.add_argument("--t-final", type=float, default=5000.0)
    fp.add_argument("--u-bar", type=float, default=0.5)
    fp.add_argument("--i-bar", type=float, default=0.1)
    fp.add_argument("--tol", type=float, default=1e-3)
    fp.add_argument("--out", required=True)
    fp.set_defaults(func=cmd_fp_solve)

    co = sub.add_parser("continual", help="run the continual gridworld suite")
    co.add_argument("--config", default=None)
    co.add_argument("--method", default="amc", choices=METHODS)
    co.add_argument("--seed", type=int, default=0)
    co.add_argument("--seeds", default=None, help="inclusive range A..B")
    co.add_argument("--workers", type=int, default=1)
    co.add_argument("--out", required=True)
    for flag in ("no-crystallization", "no-lr-modulation", "no-interference",
                 "w2-zero", "w3-zero", "single-buffer", "sigma-zero",
                 "random-v"):
        co.add_argument(f"--{flag}", action="store_true")
    co.set_defaults(func=cmd_continual)

    ca = sub.add_parser("calc", help="print closed-form quantities")
    ca.add_argument("query", choices=("fixed-point", "stationary", "occupancy",
                                      "capacity", "qbound", "fstar"))
    ca.add_argument("--config", default=None)
    ca.add_argument("--u-bar", type=float, default=0.5)
    ca.add_argument("--i-bar", type=float, default=0.1)
    ca.add_argument("--a-shape", type=float, default=2000.0)
    ca.add_argument("--b-shape", type=float, default=40.0)
    ca.add_argument("--epsilon", type=float, default=0.1)
    ca.add_argument("--delta", type=float, default=0.05)
    ca.add_argument("--gamma", type=float, default=0.95)
    ca.add_argument("--lipschitz", type=float, default=1.0)
    ca.add_argument("--r-max", type=float, default=1.0)
    ca.add_argument("--sa-count", type=int, default=256)
    ca.add_argument("--f-c", type=float, default=0.0196)
    ca.add_argument("--n-c", type=int, default=100)
    ca.set_defaults(func=cmd_calc)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; re-raise clean exits
        if exc.code not in (0, None):
            return 2
        return 0
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        return _error_exit(str(exc), 2)
    except ValueError as exc:
        return _error_exit(str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
