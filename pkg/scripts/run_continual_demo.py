#!/usr/bin/env python3
"""Small continual-learning demo: consolidating buffer vs. baselines.

Runs the reward-flip gridworld suite for the consolidating agent, the
uniform-replay baseline, and the TD-prioritized baseline on a few seeds,
then prints average performance and first-task retention per method.
"""
import argparse
import sys

import numpy as np

from crystal_replay.cli import run_continual_method
from crystal_replay.config import config_from_dict


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--tasks", type=int, default=3)
    args = ap.parse_args()

    cfg = config_from_dict({"defaults": {
        "suite": {"n_tasks": args.tasks, "max_steps": 100},
        "agent": {"episodes_per_task": 60, "eps_decay_steps": 2000,
                  "b_min": 64},
        "buffer": {"n_liquid": 400, "n_glass": 200, "n_crystal": 50},
    }})

    print(f"{args.tasks} tasks, {args.seeds} seeds\n")
    print(f"{'method':<12} {'avg performance':>16} {'task-1 retention':>17}")
    for method in ("amc", "vanilla", "prioritized"):
        aps, rets = [], []
        for seed in range(args.seeds):
            r = run_continual_method(cfg, method, seed)
            aps.append(r.metrics.average_performance)
            rets.append(r.metrics.task1_retention)
        print(f"{method:<12} {np.mean(aps):>16.3f} {np.nanmean(rets):>17.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
