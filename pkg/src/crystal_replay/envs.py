"""Desk-scale continual gridworld suite.

Tasks share one board but relocate the goal; each task turns every
earlier goal cell into a penalty cell with the reward sign flipped, so
stored goal-adjacent transitions from old tasks contradict fresh ones
and fire the interference predicate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .rng import substream

ACTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right
N_ACTIONS = len(ACTIONS)


@dataclass(frozen=True)
class GridTask:
    """One 4-connected deterministic gridworld task."""

    width: int
    height: int
    start: tuple[int, int]
    goal: tuple[int, int]
    step_reward: float = 0.0
    goal_reward: float = 1.0
    penalty_reward: float = -1.0
    penalty_cells: tuple[tuple[int, int], ...] = ()
    walls: frozenset = frozenset()
    max_steps: int = 200
    slip: float = 0.0

    def __post_init__(self) -> None:
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")
        for cell in (self.start, self.goal):
            self._check_cell(cell)
        if self.start == self.goal:
            raise ValueError("start must differ from goal")
        if self.goal in self.walls or self.start in self.walls:
            raise ValueError("start/goal cannot be walls")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= self.slip < 1.0:
            raise ValueError("slip must lie in [0, 1)")
        if not self._reachable():
            raise ValueError("goal unreachable from start")

    def _check_cell(self, cell) -> None:
        r, c = cell
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise ValueError(f"cell {cell} outside {self.height}x{self.width} grid")

    def _reachable(self) -> bool:
        seen = {self.start}
        frontier = [self.start]
        while frontier:
            cell = frontier.pop()
            if cell == self.goal:
                return True
            for dr, dc in ACTIONS:
                nxt = (cell[0] + dr, cell[1] + dc)
                if (0 <= nxt[0] < self.height and 0 <= nxt[1] < self.width
                        and nxt not in self.walls and nxt not in seen):
                    seen.add(nxt)
                    frontier.append(nxt)
        return False

    @property
    def r_max(self) -> float:
        return max(abs(self.step_reward), abs(self.goal_reward),
                   abs(self.penalty_reward))

    def states(self) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.height) for c in range(self.width)
                if (r, c) not in self.walls]

    def to_dict(self) -> dict:
        return {
            "width": self.width, "height": self.height,
            "start": list(self.start), "goal": list(self.goal),
            "step_reward": self.step_reward, "goal_reward": self.goal_reward,
            "penalty_reward": self.penalty_reward,
            "penalty_cells": [list(c) for c in self.penalty_cells],
            "walls": sorted(list(c) for c in self.walls),
            "max_steps": self.max_steps, "slip": self.slip,
        }

    @staticmethod
    def from_dict(d: dict) -> "GridTask":
        return GridTask(
            width=d["width"], height=d["height"],
            start=tuple(d["start"]), goal=tuple(d["goal"]),
            step_reward=d["step_reward"], goal_reward=d["goal_reward"],
            penalty_reward=d["penalty_reward"],
            penalty_cells=tuple(tuple(c) for c in d["penalty_cells"]),
            walls=frozenset(tuple(c) for c in d["walls"]),
            max_steps=d["max_steps"], slip=d["slip"],
        )


@dataclass(frozen=True)
class TaskSequence:
    tasks: tuple[GridTask, ...]
    permutation_seed: int

    def __post_init__(self) -> None:
        if not self.tasks:
            raise ValueError("task sequence must be non-empty")

    def to_json(self) -> str:
        return json.dumps({
            "permutation_seed": self.permutation_seed,
            "tasks": [t.to_dict() for t in self.tasks],
        })

    @staticmethod
    def from_json(text: str) -> "TaskSequence":
        d = json.loads(text)
        return TaskSequence(
            tasks=tuple(GridTask.from_dict(t) for t in d["tasks"]),
            permutation_seed=d["permutation_seed"],
        )


def _manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _place_tasks(n_tasks, height, width, rng, attempts=200):
    """Seed-permuted goal cells, pairwise well separated, each with a start
    cell strictly nearer its own goal than any other goal (path metric)."""
    cells = [(r, c) for r in range(height) for c in range(width)]
    for attempt in range(attempts):
        min_sep = 4 if attempt < attempts // 2 else 3
        order = rng.permutation(len(cells))
        goals: list[tuple[int, int]] = []
        for i in order:
            cand = cells[int(i)]
            if all(_manhattan(cand, g) >= min_sep for g in goals):
                goals.append(cand)
            if len(goals) == n_tasks:
                break
        if len(goals) < n_tasks:
            continue
        starts: list[tuple[int, int]] = []
        start_order = rng.permutation(len(cells))
        for goal in goals:
            pick = None
            for i in start_order:
                cand = cells[int(i)]
                if cand in goals or cand in starts:
                    continue
                d_own = _manhattan(cand, goal)
                if not 3 <= d_own <= 6:
                    continue
                if all(_manhattan(cand, g) >= d_own + 2
                       for g in goals if g != goal):
                    pick = cand
                    break
            if pick is None:
                break
            starts.append(pick)
        if len(starts) == n_tasks:
            return goals, starts
    raise ValueError("could not place goals/starts on this grid")


def make_reward_flip_sequence(
    n_tasks: int,
    grid: tuple[int, int] = (8, 8),
    seed: int = 42,
    max_steps: int = 200,
    goal_reward: float = 1.0,
) -> TaskSequence:
    """Sequence of tasks with seed-permuted goal cells; every earlier goal
    keeps its terminal role but its reward flips sign, so stored
    goal-adjacent transitions from old tasks contradict fresh ones.  Each
    task also gets its own start cell, strictly closer to its own goal
    than to any other task's goal."""
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    height, width = grid
    if n_tasks * 2 > height * width:
        raise ValueError("more tasks than the grid can host")
    rng = substream(seed, "envs")
    goals, starts = _place_tasks(n_tasks, height, width, rng)
    tasks = []
    for k, (goal, start) in enumerate(zip(goals, starts)):
        tasks.append(GridTask(
            width=width, height=height, start=start, goal=goal,
            step_reward=0.0, goal_reward=goal_reward,
            penalty_reward=-goal_reward,
            penalty_cells=tuple(goals[:k]),
            max_steps=max_steps,
        ))
    return TaskSequence(tasks=tuple(tasks), permutation_seed=seed)


def step(
    task: GridTask,
    state: tuple[int, int],
    action: int,
    t: int | None = None,
    rng: np.random.Generator | None = None,
):
    """One transition: 4-neighborhood move, walls and borders block.

    Returns (next_state, reward, done); done fires at the goal, at any
    former-goal penalty cell (terminal with flipped reward), and at the
    episode cap when the step index `t` is supplied.  With slip > 0
    the action is replaced by a uniform random one with that probability
    (needs `rng`; disables the exact value-iteration oracle).
    """
    task._check_cell(state)
    if state in task.walls:
        raise ValueError(f"state {state} is a wall")
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"illegal action {action}")
    if task.slip > 0.0:
        if rng is None:
            raise ValueError("slip > 0 requires an rng")
        if rng.random() < task.slip:
            action = int(rng.integers(0, N_ACTIONS))
    dr, dc = ACTIONS[action]
    nxt = (state[0] + dr, state[1] + dc)
    if not (0 <= nxt[0] < task.height and 0 <= nxt[1] < task.width) \
            or nxt in task.walls:
        nxt = state
    if nxt == task.goal:
        reward = task.goal_reward
        done = True
    elif nxt in task.penalty_cells:
        # former goal: same terminal cell, reward sign flipped
        reward = task.penalty_reward
        done = True
    else:
        reward = task.step_reward
        done = False
    if t is not None and t + 1 >= task.max_steps:
        done = True
    return nxt, reward, done


def value_iteration(task: GridTask, gamma: float, tol: float = 1e-12,
                    max_iter: int = 100_000) -> dict:
    """Exact optimal Q for the deterministic task (goal absorbing)."""
    if task.slip > 0.0:
        raise ValueError("value iteration is exact only without slip")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    states = task.states()
    terminal = {task.goal, *task.penalty_cells}
    v = {s: 0.0 for s in states}
    for _ in range(max_iter):
        delta = 0.0
        for s in states:
            if s in terminal:
                continue
            best = -float("inf")
            for a in range(N_ACTIONS):
                nxt, r, done = step(task, s, a)
                best = max(best, r + (0.0 if done else gamma * v[nxt]))
            delta = max(delta, abs(best - v[s]))
            v[s] = best
        if delta < tol:
            break
    q = {}
    for s in states:
        for a in range(N_ACTIONS):
            if s in terminal:
                q[(s, a)] = 0.0
                continue
            nxt, r, done = step(task, s, a)
            q[(s, a)] = r + (0.0 if done else gamma * v[nxt])
    return q


def greedy_return(task: GridTask, q, gamma: float = 1.0) -> float:
    """Undiscounted return of the greedy policy from the start cell."""
    state = task.start
    total = 0.0
    disc = 1.0
    for t in range(task.max_steps):
        vals = [q.value(state, a) for a in range(N_ACTIONS)]
        action = int(np.argmax(vals))
        state, reward, done = step(task, state, action, t=t)
        total += disc * reward
        disc *= gamma
        if done:
            break
    return total
