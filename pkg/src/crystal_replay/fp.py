"""Finite-difference reference solver for the population density.

Solves dp/dt = -d/dc[mu(c) p] + 1/2 d^2/dc^2[D(c) p] on [0, 1] with
mu(c) = alpha*Ubar*(1-c) - beta*Ibar*c and D(c) = sigma^2 c (1-c),
under zero total flux at both boundaries.

Scheme: cell-centered finite volumes with Chang-Cooper (exponentially
fitted) interface weights, which keeps the density non-negative and
reproduces the discrete stationary law exactly; time integration is
implicit Euler with internal sub-stepping from a CFL-like bound on the
advective coefficient.  The conserved mass functional equals the
composite trapezoid rule on the grid extended to the endpoints by
constant extrapolation, which telescopes to h * sum(p).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .sde import BetaStationary, SdeParams

_MASS_TOL = 1e-6
_NEGATIVITY_TOL = 1e-9


class FpInstabilityError(RuntimeError):
    """Raised when the density develops negativity beyond tolerance;
    reduce the internal step."""


@dataclass
class DensityGrid:
    """Cell-centered density on [0, 1]: nodes at c_k = (k + 1/2)/n."""

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 3:
            raise ValueError("density grid needs at least 3 interior nodes")
        if np.any(self.values < -_NEGATIVITY_TOL):
            raise ValueError("density values must be non-negative")

    @property
    def nodes(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return 1.0 / self.values.size

    @property
    def centers(self) -> np.ndarray:
        n = self.values.size
        return (np.arange(n) + 0.5) / n

    def mass(self) -> float:
        return float(self.h * np.sum(self.values))

    def normalized(self) -> "DensityGrid":
        return DensityGrid(self.values / self.mass(), self.time)

    @staticmethod
    def uniform(nodes: int) -> "DensityGrid":
        return DensityGrid(np.ones(nodes))

    @staticmethod
    def from_law(law: BetaStationary, nodes: int) -> "DensityGrid":
        g = DensityGrid(np.ones(nodes))
        vals = law.pdf(g.centers)
        d = DensityGrid(vals)
        return d.normalized()

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("c,p\n")
            for c, p in zip(self.centers, self.values):
                fh.write(f"{c!r},{p!r}\n")


def _interface_coefficients(n: int, params: SdeParams, u_bar: float, i_bar: float):
    """Advective / diffusive coefficients and Chang-Cooper weights at the
    n-1 interior interfaces."""
    edges = np.arange(1, n) / n
    mu = params.alpha * u_bar * (1.0 - edges) - params.beta * i_bar * edges
    big_d = params.sigma**2 * edges * (1.0 - edges)
    d_prime = params.sigma**2 * (1.0 - 2.0 * edges)
    adv = mu - 0.5 * d_prime        # flux J = adv*p - diff*dp/dc
    diff = 0.5 * big_d
    h = 1.0 / n
    delta = np.empty_like(adv)
    pos = diff > 0.0
    w = np.zeros_like(adv)
    w[pos] = adv[pos] * h / diff[pos]
    small = pos & (np.abs(w) < 1e-10)
    delta[small] = 0.5
    regular = pos & ~small
    wr = w[regular]
    # 1/expm1(w) underflows to 0 well before w = 700; clip to avoid overflow
    delta[regular] = 1.0 / wr - 1.0 / np.expm1(np.minimum(wr, 700.0))
    # degenerate diffusion: pure advection, upwinded
    delta[~pos] = np.where(adv[~pos] > 0.0, 0.0, 1.0)
    return adv, diff, delta


def _build_generator(n: int, params: SdeParams, u_bar: float, i_bar: float):
    """Tridiagonal generator L with dp/dt = L p (zero-flux boundaries)."""
    adv, diff, delta = _interface_coefficients(n, params, u_bar, i_bar)
    h = 1.0 / n
    # J_{k+1/2} = adv*[(1-delta) p_k + delta p_{k+1}] - diff*(p_{k+1}-p_k)/h
    a_left = adv * (1.0 - delta) + diff / h    # coefficient of p_k in J_{k+1/2}
    a_right = adv * delta - diff / h           # coefficient of p_{k+1}
    main = np.zeros(n)
    lower = np.zeros(n - 1)  # L[k, k-1]
    upper = np.zeros(n - 1)  # L[k, k+1]
    # dp_k/dt = -(J_{k+1/2} - J_{k-1/2})/h
    main[:-1] -= a_left / h
    upper[:] -= a_right / h
    main[1:] += a_right / h
    lower[:] += a_left / h
    return lower, main, upper


def _cfl_step(n: int, params: SdeParams, u_bar: float, i_bar: float, cfl_mult: float) -> float:
    adv, _, _ = _interface_coefficients(n, params, u_bar, i_bar)
    peak = float(np.max(np.abs(adv)))
    if peak == 0.0:
        return math.inf
    return cfl_mult / (n * peak)


def fp_evolve(
    initial: DensityGrid,
    params: SdeParams,
    u_bar: float,
    i_bar: float,
    t_final: float,
    cfl_mult: float = 2.0,
    dt_max: float | None = None,
) -> DensityGrid:
    """Advance the density to time t_final (implicit Euler, sub-stepped).

    The scheme is unconditionally stable, so the default sub-step only
    tracks the advective coefficient; it can be arbitrarily large when
    advection nearly cancels.  That is fine for stationary targets but
    first-order time error degrades transients, so pass dt_max to cap
    the sub-step when transient accuracy matters.

    Mass is conserved to solver roundoff; negativity beyond tolerance
    raises FpInstabilityError.
    """
    if dt_max is not None and dt_max <= 0:
        raise ValueError("dt_max must be positive")
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    if abs(initial.mass() - 1.0) > _MASS_TOL:
        raise ValueError("initial density must be normalized")
    if t_final == 0:
        return DensityGrid(initial.values.copy(), initial.time)
    n = initial.nodes
    lower, main, upper = _build_generator(n, params, u_bar, i_bar)
    step_cap = _cfl_step(n, params, u_bar, i_bar, cfl_mult)
    if dt_max is not None:
        step_cap = min(step_cap, dt_max)
    n_sub = max(1, math.ceil(t_final / step_cap)) if math.isfinite(step_cap) else 1
    dt = t_final / n_sub
    # banded matrix for (I - dt L)
    ab = np.zeros((3, n))
    ab[0, 1:] = -dt * upper
    ab[1, :] = 1.0 - dt * main
    ab[2, :-1] = -dt * lower
    p = initial.values.copy()
    for _ in range(n_sub):
        p = solve_banded((1, 1), ab, p)
        if np.min(p) < -_NEGATIVITY_TOL * max(1.0, float(np.max(p))):
            raise FpInstabilityError("negative density beyond tolerance; reduce the internal step")
    out = DensityGrid(np.maximum(p, 0.0), initial.time + t_final)
    if abs(out.mass() - 1.0) > _MASS_TOL:
        raise FpInstabilityError("mass drifted beyond tolerance; reduce the internal step")
    return out


def fp_l1_distance(a: DensityGrid, b: DensityGrid) -> float:
    if a.nodes != b.nodes:
        raise ValueError("grid size mismatch")
    return float(a.h * np.sum(np.abs(a.values - b.values)))


def fp_stationary_error(density: DensityGrid, law: BetaStationary) -> float:
    """L1 distance between the density and the closed-form stationary law
    evaluated on the same grid."""
    if abs(density.mass() - 1.0) > _MASS_TOL:
        raise ValueError("density must be normalized")
    ref = DensityGrid.from_law(law, density.nodes)
    return fp_l1_distance(density, ref)


def fp_convergence_rate(
    errors_over_time: list[tuple[float, float]], error_floor: float = 0.0
) -> float:
    """Least-squares exponential decay rate of an L1 error series.

    A non-monotone tail below the error floor is excluded; raises if the
    remaining series is noise-dominated.
    """
    pts = [(t, e) for t, e in errors_over_time if e > error_floor]
    if len(pts) < 5:
        raise ValueError("need at least 5 samples above the error floor")
    if any(e <= 0 for _, e in pts):
        raise ValueError("errors must be positive")
    errs = np.array([e for _, e in pts])
    if np.any(errs[1:] > errs[:-1] * 1.5):
        raise ValueError("rate unreliable below error floor: non-monotone tail")
    t = np.array([p[0] for p in pts])
    slope = np.polyfit(t, np.log(errs), 1)[0]
    return float(-slope)
