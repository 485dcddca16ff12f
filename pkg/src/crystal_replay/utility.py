"""Per-experience utility signal and interference detection.

Utility is a convex combination of a normalized TD error, a visit-count
novelty term, and the mean TD error of nearby successor experiences.
Interference fires when a near-duplicate state-action pair carries a
contradictory reward.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_UID = itertools.count()


@dataclass
class Experience:
    """One stored transition plus its consolidation bookkeeping."""

    state: tuple[float, ...]
    action: int
    reward: float
    next_state: tuple[float, ...]
    done: bool = False
    c: float = 0.0
    td_error: float = 0.0
    novelty: float = 1.0
    downstream_value: float = 0.0
    utility: float = 0.0
    interference_flag: bool = False
    interference_count: int = 0
    insert_step: int = 0
    pending_boost: float = 0.0
    uid: int = field(default_factory=lambda: next(_UID))

    def __post_init__(self) -> None:
        self.state = tuple(float(v) for v in self.state)
        self.next_state = tuple(float(v) for v in self.next_state)
        if not 0.0 <= self.c <= 1.0:
            raise ValueError("c must lie in [0, 1]")


@dataclass(frozen=True)
class UtilityWeights:
    """Convex weights over (TD error, novelty, downstream value)."""

    w1: float = 0.5
    w2: float = 0.3
    w3: float = 0.2

    def __post_init__(self) -> None:
        if min(self.w1, self.w2, self.w3) < 0:
            raise ValueError("weights must be non-negative")
        if abs(self.w1 + self.w2 + self.w3 - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


@dataclass
class NoveltyTable:
    """Visitation counts per (state, action) with normalization Z > 0."""

    z_norm: float = 100.0
    counts: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.z_norm <= 0:
            raise ValueError("z_norm must be positive")

    def visit(self, state: tuple, action: int) -> None:
        key = (tuple(state), action)
        self.counts[key] = self.counts.get(key, 0) + 1

    def count(self, state: tuple, action: int) -> int:
        return self.counts.get((tuple(state), action), 0)


@dataclass(frozen=True)
class InterferenceParams:
    """Thresholds for the contradiction predicate.

    epsilon=None means "relative": 0.1 x the empirical state-space
    diameter of the candidate pool, resolved at detection time.
    """

    epsilon: float | None = None
    delta_r: float = 0.25

    def __post_init__(self) -> None:
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.delta_r <= 0:
            raise ValueError("delta_r must be positive")


def td_error(exp: Experience, q, gamma: float) -> float:
    """|r + gamma * max_a' Q(s', a') - Q(s, a)| (terminal transitions
    drop the bootstrap term)."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    bootstrap = 0.0 if exp.done else gamma * q.max_value(exp.next_state)
    return abs(exp.reward + bootstrap - q.value(exp.state, exp.action))


def novelty(exp: Experience, table: NoveltyTable) -> float:
    """exp(-n(s, a) / Z); 1 for never-visited pairs, strictly decreasing in n."""
    return math.exp(-table.count(exp.state, exp.action) / table.z_norm)


def knn(
    query: Sequence[float],
    pool: Sequence[Experience],
    k: int,
    exclude_uid: int | None = None,
) -> list[Experience]:
    """Exact k-nearest scan over stored states under Euclidean distance.

    Ties break by insert_step, then pool index.  Returns fewer than k
    members when the pool is smaller.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = [e for e in pool if e.uid != exclude_uid]
    if not candidates:
        raise ValueError("pool is empty")
    q = np.asarray(query, dtype=float)
    if q.shape != (len(candidates[0].state),):
        raise ValueError("query dimension mismatch")
    keyed = sorted(
        enumerate(candidates),
        key=lambda ie: (
            float(np.linalg.norm(np.asarray(ie[1].state) - q)),
            ie[1].insert_step,
            ie[0],
        ),
    )
    return [e for _, e in keyed[:k]]


def downstream_value(
    exp: Experience,
    pool: Sequence[Experience],
    k: int,
    variant: str = "states",
) -> float:
    """Mean TD error over the k nearest neighbors of exp.next_state.

    `variant` selects the neighbor coordinates: "states" (default)
    matches exp.next_state against other experiences' states,
    "next_states" against their next_states.  A fresh, empty pool
    contributes 0.
    """
    if variant not in ("states", "next_states"):
        raise ValueError(f"unknown neighbor variant {variant!r}")
    candidates = [e for e in pool if e.uid != exp.uid]
    if not candidates:
        return 0.0
    q = np.asarray(exp.next_state, dtype=float)
    coord = (lambda e: e.state) if variant == "states" else (lambda e: e.next_state)
    keyed = sorted(
        enumerate(candidates),
        key=lambda ie: (
            float(np.linalg.norm(np.asarray(coord(ie[1])) - q)),
            ie[1].insert_step,
            ie[0],
        ),
    )
    neighbors = [e for _, e in keyed[:k]]
    return float(np.mean([e.td_error for e in neighbors]))


def utility_score(
    td: float, nov: float, dv: float, weights: UtilityWeights, td_scale: float
) -> float:
    """w1*min(1, td/scale) + w2*nov + w3*min(1, dv/scale), in [0, 1]."""
    if td_scale <= 0:
        raise ValueError("td_scale must be positive")
    return (
        weights.w1 * min(1.0, td / td_scale)
        + weights.w2 * nov
        + weights.w3 * min(1.0, dv / td_scale)
    )


def state_action_distance(a: Experience, b: Experience) -> float:
    """Euclidean state distance plus 0/1 action mismatch."""
    ds = float(np.linalg.norm(np.asarray(a.state) - np.asarray(b.state)))
    return ds + (0.0 if a.action == b.action else 1.0)


def resolve_epsilon(p: InterferenceParams, pool: Iterable[Experience]) -> float:
    if p.epsilon is not None:
        return p.epsilon
    states = np.array([e.state for e in pool], dtype=float)
    if states.size == 0:
        return 1e-9
    span = states.max(axis=0) - states.min(axis=0)
    diameter = float(np.linalg.norm(span))
    return max(0.1 * diameter, 1e-9)


def detect_interference(
    exp: Experience,
    candidates: Sequence[Experience],
    p: InterferenceParams,
) -> bool:
    """True iff some other candidate is within epsilon in (s, a) but
    differs in reward by more than delta_r."""
    others = [e for e in candidates if e.uid != exp.uid]
    if not others:
        return False
    eps = resolve_epsilon(p, others)
    for e in others:
        if state_action_distance(exp, e) < eps and abs(exp.reward - e.reward) > p.delta_r:
            return True
    return False
