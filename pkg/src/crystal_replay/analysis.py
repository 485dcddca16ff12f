"""Statistical validators over simulation output.

Every function here is a pure computation on recorded data, so verdicts
are reproducible from saved artifacts.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .sde import EnsembleSummary  # re-exported for consumers

__all__ = [
    "EnsembleSummary",
    "ks_statistic",
    "ks_critical_value",
    "fit_exponential_rate",
    "occupancy_fractions",
    "forgetting_frequency",
]


def ks_statistic(samples: np.ndarray, cdf: Callable[[float], float]) -> float:
    """Sup-distance between the empirical CDF of sorted samples and `cdf`."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    if np.any(np.diff(x) < 0):
        raise ValueError("samples must be sorted ascending")
    n = x.size
    f = np.array([cdf(v) for v in x])
    upper = np.max(np.arange(1, n + 1) / n - f)
    lower = np.max(f - np.arange(0, n) / n)
    return float(max(upper, lower, 0.0))


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value c(alpha)/sqrt(n)."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n)


def fit_exponential_rate(
    series: Sequence[tuple[float, float]], noise_floor: float = 0.0
) -> float:
    """Decay rate from a least-squares fit of ln(gap) against time.

    Points at or below `noise_floor` are excluded; at least 5 usable
    points are required.  A flat series yields rate 0.
    """
    pts = [(t, g) for t, g in series if g > noise_floor]
    if len(pts) < 5:
        raise ValueError("fewer than 5 usable points above the noise floor")
    t = np.array([p[0] for p in pts])
    g = np.array([p[1] for p in pts])
    if np.any(g <= 0):
        raise ValueError("gap values must be positive")
    slope = np.polyfit(t, np.log(g), 1)[0]
    return float(-slope)


def occupancy_fractions(
    path: np.ndarray, tau_l: float, tau_c: float, burn_in: int
) -> tuple[float, float, float]:
    """Post-burn-in time fractions below tau_l / between / above tau_c."""
    if not (0.0 < tau_l < tau_c < 1.0):
        raise ValueError("thresholds must satisfy 0 < tau_l < tau_c < 1")
    x = np.asarray(path, dtype=float)
    if x.size <= burn_in + 1:
        raise ValueError("path too short for the requested burn-in")
    x = x[burn_in:]
    n = x.size
    f_l = float(np.count_nonzero(x < tau_l)) / n
    f_c = float(np.count_nonzero(x > tau_c)) / n
    return (f_l, 1.0 - f_l - f_c, f_c)


def forgetting_frequency(terminal_samples: np.ndarray, tau_l: float) -> float:
    """Fraction of paths whose terminal state fell below tau_l."""
    x = np.asarray(terminal_samples, dtype=float)
    if x.size < 10_000:
        raise ValueError("need at least 1e4 paths for a stable frequency estimate")
    return float(np.count_nonzero(x < tau_l)) / x.size


def multinomial_slack(p_hat: float, n: int, z: float = 3.0) -> float:
    """z-sigma slack for an empirical proportion (bound checks are one-sided)."""
    p = max(p_hat, 1.0 / n)
    return z * math.sqrt(p * (1.0 - p) / n)
