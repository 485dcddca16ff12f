"""Three-phase replay buffer: consolidation, transfers, sampling.

Experiences enter the liquid store fully plastic, migrate to glass and
crystal as their crystallization state crosses the thresholds, and drop
back to liquid through a hysteresis band.  A consolidation pass rescores
utilities, steps every c through the SDE, applies transfers and
evictions, and enforces the liquid capacity.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .sde import SdeParams, em_step
from .utility import (
    Experience,
    InterferenceParams,
    NoveltyTable,
    UtilityWeights,
    resolve_epsilon,
)


@dataclass(frozen=True)
class Thresholds:
    """Phase boundaries, demotion hysteresis, and crystal eviction patience."""

    tau_l: float = 0.3
    tau_c: float = 0.7
    hysteresis: float = 0.05
    tau_evict: int = 20

    def __post_init__(self) -> None:
        if not (0.0 < self.tau_l < self.tau_c < 1.0):
            raise ValueError("need 0 < tau_l < tau_c < 1")
        if self.hysteresis <= 0 or self.tau_l - self.hysteresis <= 0:
            raise ValueError("hysteresis must be positive with tau_l - hysteresis > 0")
        if self.tau_evict < 1:
            raise ValueError("tau_evict must be >= 1")


@dataclass(frozen=True)
class SamplingConfig:
    """Stratified batch composition and priority/IS exponents."""

    batch_size: int = 32
    liquid_frac: float = 0.70
    glass_frac: float = 0.25
    crystal_frac: float = 0.05
    priority_exponent_liquid: float = 0.6
    is_exponent: float = 0.4

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if abs(self.liquid_frac + self.glass_frac + self.crystal_frac - 1.0) > 1e-9:
            raise ValueError("phase fractions must sum to 1")
        if min(self.priority_exponent_liquid, self.is_exponent) < 0:
            raise ValueError("exponents must be non-negative")


@dataclass
class ConsolidationReport:
    promotions_lg: int = 0
    promotions_gc: int = 0
    demotions_gl: int = 0
    crystal_evictions: int = 0
    liquid_evictions: int = 0
    mean_c_liquid: float = 0.0
    mean_c_glass: float = 0.0
    mean_c_crystal: float = 0.0

    CSV_HEADER = (
        "promotions_lg,promotions_gc,demotions_gl,crystal_evictions,"
        "liquid_evictions,mean_c_liquid,mean_c_glass,mean_c_crystal"
    )

    def csv_row(self) -> str:
        return (
            f"{self.promotions_lg},{self.promotions_gc},{self.demotions_gl},"
            f"{self.crystal_evictions},{self.liquid_evictions},"
            f"{self.mean_c_liquid!r},{self.mean_c_glass!r},{self.mean_c_crystal!r}"
        )


SNAPSHOT_VERSION = 1


class PhaseBuffers:
    """Liquid / glass / crystal stores with capacities N_L, N_G, N_C."""

    def __init__(self, n_liquid: int, n_glass: int, n_crystal: int,
                 novelty_z: float = 100.0):
        if min(n_liquid, n_glass, n_crystal) < 1:
            raise ValueError("capacities must be >= 1")
        self.n_liquid = n_liquid
        self.n_glass = n_glass
        self.n_crystal = n_crystal
        self.liquid: list[Experience] = []
        self.glass: list[Experience] = []
        self.crystal: list[Experience] = []
        self.novelty = NoveltyTable(z_norm=novelty_z)

    # -- bookkeeping ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.liquid) + len(self.glass) + len(self.crystal)

    def all_experiences(self) -> list[Experience]:
        return self.liquid + self.glass + self.crystal

    def phase_of(self, exp: Experience) -> str:
        for name in ("liquid", "glass", "crystal"):
            if any(e.uid == exp.uid for e in getattr(self, name)):
                return name
        raise KeyError("experience not stored")

    # -- insertion ------------------------------------------------------

    def insert(self, exp: Experience) -> None:
        """Store a fresh experience in the liquid phase (requires c = 0)."""
        if exp.c != 0.0:
            raise ValueError("new experiences must enter with c = 0")
        self.liquid.append(exp)
        self.novelty.visit(exp.state, exp.action)

    # -- consolidation --------------------------------------------------

    def consolidate(
        self,
        q,
        sde: SdeParams,
        weights: UtilityWeights,
        ip: InterferenceParams,
        th: Thresholds,
        rng: np.random.Generator,
        gamma: float,
        td_scale: float,
        k: int = 10,
        knn_variant: str = "states",
        crystallize: bool = True,
        interference_on: bool = True,
        random_v_rng: np.random.Generator | None = None,
        transfer: bool = True,
    ) -> ConsolidationReport:
        """One full consolidation pass over the union of all stores.

        Order: rescore all utilities, detect interference, step every c,
        then apply transfers (hysteresis band for demotion), crystal
        interference eviction, and finally the liquid capacity sweep.
        Iteration order is liquid, glass, crystal, insertion order within
        each phase, so a fixed RNG stream reproduces the pass exactly.
        """
        report = ConsolidationReport()
        exps = self.all_experiences()
        n = len(exps)
        if n == 0:
            return report

        states = np.array([e.state for e in exps], dtype=float)
        next_states = np.array([e.next_state for e in exps], dtype=float)
        actions = np.array([e.action for e in exps])
        rewards = np.array([e.reward for e in exps], dtype=float)

        deltas = np.array([
            abs(e.reward
                + (0.0 if e.done else gamma * q.max_value(e.next_state))
                - q.value(e.state, e.action))
            for e in exps
        ])
        novs = np.array([
            math.exp(-self.novelty.count(e.state, e.action) / self.novelty.z_norm)
            for e in exps
        ])

        if random_v_rng is not None:
            # ablation: neighborhood structure replaced by a uniform pick
            picks = random_v_rng.integers(0, n, size=n)
            dvs = deltas[picks]
        else:
            dvs = _batch_downstream(exps, states, next_states, deltas, k, knn_variant)

        if interference_on:
            flags = _batch_interference(states, actions, rewards, ip, exps)
        else:
            flags = np.zeros(n, dtype=bool)

        utils = (
            weights.w1 * np.minimum(1.0, deltas / td_scale)
            + weights.w2 * novs
            + weights.w3 * np.minimum(1.0, dvs / td_scale)
        )
        boosts = np.array([e.pending_boost for e in exps])
        utils = np.clip(utils + boosts, 0.0, 1.0)

        cs = np.array([e.c for e in exps])
        if crystallize:
            noise = rng.standard_normal(n)
            cs = em_step(cs, utils, flags.astype(float), sde, noise)

        for e, d, nv, dv, u, fl, c in zip(exps, deltas, novs, dvs, utils, flags, cs):
            e.td_error = float(d)
            e.novelty = float(nv)
            e.downstream_value = float(dv)
            e.utility = float(u)
            e.interference_flag = bool(fl)
            e.pending_boost = 0.0
            e.c = float(c)
            if not fl:
                e.interference_count = 0

        if crystallize and transfer:
            self._apply_transfers(th, report)
            self._crystal_evictions(th, report)
        self._enforce_liquid_capacity(report)

        report.mean_c_liquid = _mean_c(self.liquid)
        report.mean_c_glass = _mean_c(self.glass)
        report.mean_c_crystal = _mean_c(self.crystal)
        return report

    def _apply_transfers(self, th: Thresholds, report: ConsolidationReport) -> None:
        promoted = [e for e in self.liquid if e.c > th.tau_l]
        for e in promoted:
            if len(self.glass) < self.n_glass:
                self.liquid.remove(e)
                self.glass.append(e)
                report.promotions_lg += 1
        promoted = [e for e in self.glass if e.c > th.tau_c]
        for e in promoted:
            if len(self.crystal) < self.n_crystal:
                self.glass.remove(e)
                self.crystal.append(e)
                report.promotions_gc += 1
        demoted = [e for e in self.glass if e.c < th.tau_l - th.hysteresis]
        for e in demoted:
            self.glass.remove(e)
            self.liquid.append(e)
            report.demotions_gl += 1

    def _crystal_evictions(self, th: Thresholds, report: ConsolidationReport) -> None:
        survivors = []
        for e in self.crystal:
            if e.interference_flag:
                e.interference_count += 1
            if e.interference_count >= th.tau_evict:
                report.crystal_evictions += 1
            else:
                survivors.append(e)
        self.crystal = survivors

    def _enforce_liquid_capacity(self, report: ConsolidationReport) -> None:
        while len(self.liquid) > self.n_liquid:
            victim = min(
                range(len(self.liquid)),
                key=lambda i: (self.liquid[i].utility, self.liquid[i].insert_step, i),
            )
            self.liquid.pop(victim)
            report.liquid_evictions += 1

    # -- sampling ---------------------------------------------------------

    def stratified_sample(
        self, cfg: SamplingConfig, rng: np.random.Generator
    ) -> list[tuple[Experience, float]]:
        """Phase-stratified batch with importance-sampling weights.

        Quotas are floor(0.70 B) liquid, floor(0.25 B) glass,
        ceil(0.05 B) crystal; an empty stratum's quota cascades
        liquid -> glass -> crystal -> liquid.  Each draw carries
        w = (N * P(e))^(-nu) with P the within-stratum probability,
        normalized so the batch maximum is exactly 1.
        """
        if len(self) == 0:
            raise ValueError("all buffers are empty")
        b = cfg.batch_size
        quotas = {
            "liquid": int(math.floor(cfg.liquid_frac * b)),
            "glass": int(math.floor(cfg.glass_frac * b)),
            "crystal": int(math.ceil(cfg.crystal_frac * b)),
        }
        order = ["liquid", "glass", "crystal"]
        stores = {name: getattr(self, name) for name in order}
        # cascade quotas out of empty strata
        for idx, name in enumerate(order):
            if not stores[name] and quotas[name] > 0:
                for step in range(1, 3):
                    target = order[(idx + step) % 3]
                    if stores[target]:
                        quotas[target] += quotas[name]
                        quotas[name] = 0
                        break
        n_total = len(self)
        nu = cfg.is_exponent
        batch: list[tuple[Experience, float]] = []
        raw_weights: list[float] = []
        for name in order:
            store = stores[name]
            quota = quotas[name]
            if quota == 0 or not store:
                continue
            pr = _phase_priorities(name, store, cfg)
            total = pr.sum()
            probs = pr / total if total > 0 else np.full(len(store), 1.0 / len(store))
            picks = rng.choice(len(store), size=quota, p=probs)
            for i in picks:
                batch.append((store[int(i)], 0.0))
                raw_weights.append((n_total * probs[int(i)]) ** (-nu))
        peak = max(raw_weights)
        return [(e, w / peak) for (e, _), w in zip(batch, raw_weights)]

    # -- serialization ----------------------------------------------------

    def to_snapshot(self) -> dict:
        def dump(e: Experience) -> dict:
            return {
                "state": list(e.state), "action": e.action, "reward": e.reward,
                "next_state": list(e.next_state), "done": e.done, "c": e.c,
                "td_error": e.td_error, "novelty": e.novelty,
                "downstream_value": e.downstream_value, "utility": e.utility,
                "interference_flag": e.interference_flag,
                "interference_count": e.interference_count,
                "insert_step": e.insert_step, "pending_boost": e.pending_boost,
            }

        return {
            "version": SNAPSHOT_VERSION,
            "capacities": [self.n_liquid, self.n_glass, self.n_crystal],
            "novelty_z": self.novelty.z_norm,
            "novelty_counts": [
                [list(state), action, count]
                for (state, action), count in sorted(self.novelty.counts.items())
            ],
            "phases": {name: [dump(e) for e in getattr(self, name)]
                       for name in ("liquid", "glass", "crystal")},
        }

    @staticmethod
    def from_snapshot(snap: dict) -> "PhaseBuffers":
        if snap.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {snap.get('version')!r}")
        buf = PhaseBuffers(*snap["capacities"], novelty_z=snap["novelty_z"])
        for state, action, count in snap["novelty_counts"]:
            buf.novelty.counts[(tuple(state), action)] = count
        for name in ("liquid", "glass", "crystal"):
            for d in snap["phases"][name]:
                e = Experience(
                    state=tuple(d["state"]), action=d["action"], reward=d["reward"],
                    next_state=tuple(d["next_state"]), done=d["done"],
                )
                e.c = d["c"]
                e.td_error = d["td_error"]
                e.novelty = d["novelty"]
                e.downstream_value = d["downstream_value"]
                e.utility = d["utility"]
                e.interference_flag = d["interference_flag"]
                e.interference_count = d["interference_count"]
                e.insert_step = d["insert_step"]
                e.pending_boost = d["pending_boost"]
                getattr(buf, name).append(e)
        return buf

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_snapshot(), fh)

    @staticmethod
    def load(path: str) -> "PhaseBuffers":
        with open(path) as fh:
            return PhaseBuffers.from_snapshot(json.load(fh))


def _mean_c(store: list[Experience]) -> float:
    return float(np.mean([e.c for e in store])) if store else 0.0


def _phase_priorities(name: str, store: list[Experience],
                      cfg: SamplingConfig) -> np.ndarray:
    d = np.array([abs(e.td_error) for e in store])
    c = np.array([e.c for e in store])
    if name == "liquid":
        return d ** cfg.priority_exponent_liquid
    if name == "glass":
        return d ** cfg.is_exponent * np.sqrt(c)
    return c.astype(float)


def _batch_downstream(exps, states, next_states, deltas, k, variant):
    """Vectorized neighbor-mean TD error; ties break by insert_step then
    insertion order, matching the scalar oracle when insert steps are
    unique."""
    n = len(exps)
    if n == 1:
        return np.zeros(1)
    coords = states if variant == "states" else next_states
    order = sorted(range(n), key=lambda i: (exps[i].insert_step, i))
    coords_sorted = coords[order]
    deltas_sorted = deltas[order]
    diff = next_states[:, None, :] - coords_sorted[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    # exclude self: column position of row i under the permutation
    pos = np.empty(n, dtype=int)
    for col, i in enumerate(order):
        pos[i] = col
    dist[np.arange(n), pos] = np.inf
    kk = min(k, n - 1)
    idx = np.argsort(dist, axis=1, kind="stable")[:, :kk]
    return deltas_sorted[idx].mean(axis=1)


def _batch_interference(states, actions, rewards, ip: InterferenceParams, exps):
    """Full pairwise contradiction scan (exact at desk scale)."""
    n = len(states)
    if n < 2:
        return np.zeros(n, dtype=bool)
    eps = resolve_epsilon(ip, exps)
    diff = states[:, None, :] - states[None, :, :]
    sa_dist = np.sqrt(np.sum(diff * diff, axis=2))
    sa_dist += (actions[:, None] != actions[None, :]).astype(float)
    near = sa_dist < eps
    np.fill_diagonal(near, False)
    contradict = np.abs(rewards[:, None] - rewards[None, :]) > ip.delta_r
    return np.any(near & contradict, axis=1)


def effective_lr(eta_base: float, c: float) -> float:
    """Phase-modulated learning rate eta_base * (1 - c)^2."""
    if eta_base < 0:
        raise ValueError("eta_base must be non-negative")
    if not 0.0 <= c <= 1.0:
        raise ValueError("c must lie in [0, 1]")
    return eta_base * (1.0 - c) ** 2


def optimal_crystal_fraction(sde: SdeParams, u_bar: float, i_bar: float) -> float:
    """Error-minimizing crystal-buffer fraction beta*Ibar/(alpha*Ubar + beta*Ibar)."""
    denom = sde.alpha * u_bar + sde.beta * i_bar
    if denom <= 0:
        raise ValueError("alpha*Ubar + beta*Ibar must be positive")
    return sde.beta * i_bar / denom


def capacity_bound(
    epsilon: float, delta: float, gamma: float, lipschitz: float,
    r_max: float, sa_count: int, f_c: float,
) -> float:
    """Sufficient total buffer size for an epsilon-accurate Q-table with
    failure probability delta, at crystal fraction f_c."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    k_sq = 4.0 * gamma**2 * lipschitz**2 * r_max**2 / ((1.0 - gamma) ** 4 * epsilon**2)
    return k_sq * f_c * math.log(sa_count / delta)


def qlearning_error_bound(
    gamma: float, r_max: float, lipschitz: float, f_c: float, n_c: int
) -> float:
    """Asymptotic Q-error ceiling 2 gamma R L / (1-gamma)^2 * f_c / sqrt(N_C)."""
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    return 2.0 * gamma * r_max * lipschitz / (1.0 - gamma) ** 2 * f_c / math.sqrt(n_c)
