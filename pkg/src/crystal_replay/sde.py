"""Crystallization-state dynamics.

The per-experience stability scalar c lives on [0, 1] and follows a
Jacobi-type diffusion: drift alpha*U*(1-c) - beta*c*I, diffusion
sigma*sqrt(c*(1-c)).  This module provides the Euler-Maruyama stepper,
the closed-form fixed-point and variance analytics, the stationary Beta
law with its occupancy and forgetting bounds, the quasi-potential, and
reproducible ensemble/trajectory simulators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .betainc import log_beta, regularized_incomplete_beta
from .rng import noise_row, substream


@dataclass(frozen=True)
class SdeParams:
    """Consolidation dynamics constants."""

    alpha: float = 0.05   # consolidation rate, 1/step
    beta: float = 0.005   # decrystallization rate, 1/step
    sigma: float = 0.005  # noise coefficient
    dt: float = 1.0       # integration step

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class FixedPointAnalysis:
    """Mean-dynamics fixed point and its decay rate."""

    c_star: float
    decay_rate: float
    variance_ceiling: float

    def variance_bound(self, t: float) -> float:
        """Time-dependent variance bound (diagnostic; tighter than the
        horizon-uniform ceiling)."""
        cs = self.c_star
        lam = self.decay_rate
        # sigma^2 recovered from the ceiling definition sigma^2/(8 lam)
        sigma_sq = 8.0 * lam * self.variance_ceiling
        return sigma_sq * cs * (1.0 - cs) * (1.0 - math.exp(-2.0 * lam * t)) / (2.0 * lam)


@dataclass(frozen=True)
class BetaStationary:
    """Shape parameters of the closed-form stationary law."""

    a_shape: float
    b_shape: float

    def __post_init__(self) -> None:
        if self.a_shape <= 0 or self.b_shape <= 0:
            raise ValueError("Beta shape parameters must be positive")

    @property
    def mean(self) -> float:
        return self.a_shape / (self.a_shape + self.b_shape)

    @property
    def variance(self) -> float:
        a, b = self.a_shape, self.b_shape
        return a * b / ((a + b) ** 2 * (a + b + 1.0))

    def pdf(self, c):
        c = np.asarray(c, dtype=float)
        a, b = self.a_shape, self.b_shape
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = (a - 1.0) * np.log(c) + (b - 1.0) * np.log1p(-c) - log_beta(a, b)
        out = np.exp(logp)
        return np.where((c <= 0.0) | (c >= 1.0), _boundary_pdf(c, a, b), out)

    def cdf(self, x: float) -> float:
        return regularized_incomplete_beta(x, self.a_shape, self.b_shape)


def _boundary_pdf(c, a, b):
    # pointwise limits of the Beta density at 0 and 1
    lo = 0.0 if a > 1.0 else (1.0 / log_beta_safe(a, b) if a == 1.0 else np.inf)
    hi = 0.0 if b > 1.0 else (1.0 / log_beta_safe(a, b) if b == 1.0 else np.inf)
    return np.where(np.asarray(c) <= 0.0, lo, hi)


def log_beta_safe(a: float, b: float) -> float:
    return math.exp(log_beta(a, b))


def _check_unit_interval(x, name: str) -> None:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")


def em_step(c, utility, interference, params: SdeParams, noise):
    """One Euler-Maruyama update of the crystallization state.

    Accepts scalars or broadcastable arrays.  The diffusion factor is
    computed from the pre-step c with a sqrt(max(0, .)) guard, and the
    result is clipped back into [0, 1].
    """
    _check_unit_interval(c, "c")
    _check_unit_interval(utility, "utility")
    c = np.asarray(c, dtype=float)
    u = np.asarray(utility, dtype=float)
    i = np.asarray(interference, dtype=float)
    z = np.asarray(noise, dtype=float)
    drift = params.alpha * u * (1.0 - c) - params.beta * c * i
    diffusion = params.sigma * np.sqrt(np.maximum(params.dt * c * (1.0 - c), 0.0))
    out = np.clip(c + params.dt * drift + diffusion * z, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def fixed_point(utility: float, interference: float, params: SdeParams) -> FixedPointAnalysis:
    """Fixed point c* = aU/(aU + bI), decay rate, and variance ceiling.

    `interference` may be a binary flag or a mean interference level.
    """
    _check_unit_interval(utility, "utility")
    _check_unit_interval(interference, "interference")
    lam = params.alpha * utility + params.beta * interference
    if lam <= 0.0:
        raise ValueError("alpha*U + beta*I = 0: no unique fixed point")
    c_star = params.alpha * utility / lam
    return FixedPointAnalysis(
        c_star=c_star,
        decay_rate=lam,
        variance_ceiling=params.sigma**2 / (8.0 * lam),
    )


def mean_trajectory(c0: float, fp: FixedPointAnalysis, t) -> float | np.ndarray:
    """Closed-form ensemble mean c* + (c0 - c*) exp(-lambda t)."""
    _check_unit_interval(c0, "c0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    out = fp.c_star + (c0 - fp.c_star) * np.exp(-fp.decay_rate * t)
    return float(out) if out.ndim == 0 else out


def stationary_beta(params: SdeParams, u_bar: float, i_bar: float) -> BetaStationary:
    """Stationary law Beta(2 alpha Ubar / sigma^2, 2 beta Ibar / sigma^2)."""
    if params.sigma <= 0.0:
        raise ValueError("sigma = 0: no diffusive stationary law; use fixed_point instead")
    if u_bar <= 0.0 or i_bar <= 0.0:
        raise ValueError("u_bar and i_bar must be positive")
    return BetaStationary(
        a_shape=2.0 * params.alpha * u_bar / params.sigma**2,
        b_shape=2.0 * params.beta * i_bar / params.sigma**2,
    )


def phase_occupancy(law: BetaStationary, tau_l: float, tau_c: float) -> tuple[float, float, float]:
    """Stationary time fractions spent below tau_l, between, and above tau_c."""
    if not (0.0 < tau_l < tau_c < 1.0):
        raise ValueError("thresholds must satisfy 0 < tau_l < tau_c < 1")
    lo = law.cdf(tau_l)
    hi = law.cdf(tau_c)
    return (lo, hi - lo, 1.0 - hi)


def forgetting_bound_chebyshev(fp: FixedPointAnalysis, tau_l: float, sigma: float) -> float:
    """Horizon-uniform bound on P[c(T) < tau_l] via the variance ceiling."""
    if fp.c_star <= tau_l:
        raise ValueError("c_star <= tau_l: bound vacuous")
    if sigma == 0.0:
        return 0.0
    ceiling = sigma**2 / (8.0 * fp.decay_rate)
    return min(1.0, ceiling / (fp.c_star - tau_l) ** 2)


def forgetting_bound_gaussian(
    c0: float, tau_l: float, decay_rate: float, sigma: float, horizon: float
) -> float:
    """Horizon-explicit forgetting bound.

    exp(-2 lam (c0 - tau_l)^2 / (sigma^2 T)) * exp(-lam T / 2), clamped
    to [0, 1].  The closed form is derived under lam*T >= 1; for shorter
    horizons it is evaluated as written.
    """
    if c0 <= tau_l:
        raise ValueError("c0 must exceed tau_l")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if sigma == 0.0:
        return 0.0
    margin = c0 - tau_l
    log_p = -2.0 * decay_rate * margin**2 / (sigma**2 * horizon) - decay_rate * horizon / 2.0
    return min(1.0, math.exp(log_p))


def quasi_potential(c, law: BetaStationary):
    """Potential -[A ln c + B ln(1-c)], defined on the open interval."""
    arr = np.asarray(c, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("potential diverges at the boundary; c must lie in (0, 1)")
    out = -(law.a_shape * np.log(arr) + law.b_shape * np.log1p(-arr))
    return float(out) if out.ndim == 0 else out


def quasi_potential_drift(c, law: BetaStationary, sigma: float):
    """Drift reconstructed from the potential gradient: -D_L(c) dF/dc
    with D_L(c) = sigma^2 c (1-c) / 2."""
    arr = np.asarray(c, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("c must lie in (0, 1)")
    grad = -(law.a_shape / arr) + law.b_shape / (1.0 - arr)
    out = -(sigma**2 * arr * (1.0 - arr) / 2.0) * grad
    return float(out) if out.ndim == 0 else out


@dataclass
class EnsembleSummary:
    """Checkpointed moments and terminal samples of a simulated ensemble."""

    checkpoints: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    terminal_samples: np.ndarray
    n_paths: int = field(default=0)

    def __post_init__(self) -> None:
        if np.any(self.variances < 0):
            raise ValueError("variances must be non-negative")


def simulate_ensemble(
    params: SdeParams,
    utility: float,
    interference: float,
    c0: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    checkpoint_every: int = 0,
    stream: str = "sde",
    path_slice: slice | None = None,
) -> EnsembleSummary:
    """Simulate independent paths with constant (U, I).

    Noise is a pure function of (seed, stream, step, path index), so a
    worker given `path_slice` produces exactly the paths it would own in
    a single-process run.  Checkpoints record time (in steps * dt),
    ensemble mean, and ensemble variance.
    """
    _check_unit_interval(c0, "c0")
    sl = path_slice if path_slice is not None else slice(0, n_paths)
    c = np.full(sl.stop - sl.start, float(c0))
    times, means, variances = [0.0], [float(np.mean(c))], [float(np.var(c))]
    for step in range(n_steps):
        z = noise_row(seed, step, n_paths, stream)[sl]
        c = em_step(c, utility, interference, params, z)
        if checkpoint_every and (step + 1) % checkpoint_every == 0:
            times.append((step + 1) * params.dt)
            means.append(float(np.mean(c)))
            variances.append(float(np.var(c)))
    if not checkpoint_every or n_steps % checkpoint_every != 0:
        times.append(n_steps * params.dt)
        means.append(float(np.mean(c)))
        variances.append(float(np.var(c)))
    return EnsembleSummary(
        checkpoints=np.asarray(times),
        means=np.asarray(means),
        variances=np.asarray(variances),
        terminal_samples=c,
        n_paths=len(c),
    )


def simulate_path(
    params: SdeParams,
    utility: float,
    interference: float,
    c0: float,
    n_steps: int,
    seed: int,
    stream: str = "sde-path",
) -> np.ndarray:
    """Single long trajectory; returns the full state sequence (n_steps + 1)."""
    _check_unit_interval(c0, "c0")
    gen = substream(seed, stream)
    noise = gen.standard_normal(n_steps)
    a, b, s, dt = params.alpha, params.beta, params.sigma, params.dt
    u, i = float(utility), float(interference)
    out = np.empty(n_steps + 1)
    c = float(c0)
    out[0] = c
    sdt = s * math.sqrt(dt)
    for k in range(n_steps):
        drift = a * u * (1.0 - c) - b * c * i
        c = c + dt * drift + sdt * math.sqrt(max(c * (1.0 - c), 0.0)) * noise[k]
        if c < 0.0:
            c = 0.0
        elif c > 1.0:
            c = 1.0
        out[k + 1] = c
    return out


def weak_error_means(
    params: SdeParams,
    utility: float,
    interference: float,
    c0: float,
    t_final: float,
    dts: list[float],
    n_paths: int,
    seed: int,
) -> dict[float, float]:
    """Terminal ensemble means at several step sizes under coupled noise.

    All step sizes share one underlying Brownian path per ensemble member:
    increments are generated at the finest level and aggregated for the
    coarser ones, which makes successive-mean differences a low-variance
    estimate of the weak discretization error.
    """
    dts = sorted(dts, reverse=True)
    finest = dts[-1]
    n_fine = round(t_final / finest)
    if not math.isclose(n_fine * finest, t_final):
        raise ValueError("t_final must be an integer multiple of the finest dt")
    strides = {}
    for dt in dts:
        ratio = dt / finest
        if not math.isclose(ratio, round(ratio)):
            raise ValueError("all dts must be integer multiples of the finest dt")
        strides[dt] = round(ratio)
    # Brownian increments at the finest resolution, one row per fine step.
    states = {dt: np.full(n_paths, float(c0)) for dt in dts}
    pending = {dt: np.zeros(n_paths) for dt in dts}
    for k in range(n_fine):
        dw = noise_row(seed, k, n_paths, "weak-error") * math.sqrt(finest)
        for dt in dts:
            pending[dt] += dw
            if (k + 1) % strides[dt] == 0:
                c = states[dt]
                drift = params.alpha * utility * (1.0 - c) - params.beta * c * interference
                diffusion = params.sigma * np.sqrt(np.maximum(c * (1.0 - c), 0.0))
                states[dt] = np.clip(c + dt * drift + diffusion * pending[dt], 0.0, 1.0)
                pending[dt] = np.zeros(n_paths)
    return {dt: float(np.mean(states[dt])) for dt in dts}
