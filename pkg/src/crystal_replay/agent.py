"""Tabular Q-learning agents over the gridworld suite.

One agent runs the full consolidating-buffer loop (store at c = 0,
phase-stratified replay, periodic consolidation, phase-modulated
learning rates); the baselines share the identical loop with a single
FIFO buffer sampled uniformly or by TD-error priority.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .envs import ACTIONS, N_ACTIONS, GridTask, TaskSequence, greedy_return, step
from .memory import (
    PhaseBuffers,
    SamplingConfig,
    Thresholds,
    effective_lr,
)
from .rng import substream
from .sde import SdeParams
from .utility import Experience, InterferenceParams, UtilityWeights


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.95
    eta0: float = 0.5
    lr_decay: float = 1e-5
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 3000
    f_train: int = 1
    f_consol: int = 50
    f_target: int = 100
    b_min: int = 64
    episodes_per_task: int = 80
    eval_episodes: int = 20

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.eta0 <= 0 or self.lr_decay <= 0:
            raise ValueError("eta0 and lr_decay must be positive")
        if min(self.f_train, self.f_consol, self.f_target) < 1:
            raise ValueError("frequencies must be >= 1")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if self.b_min < 1 or self.episodes_per_task < 1 or self.eval_episodes < 1:
            raise ValueError("counts must be >= 1")

    def eta_base(self, t: int) -> float:
        return self.eta0 / (1.0 + self.lr_decay * t)

    def epsilon(self, task_step: int) -> float:
        frac = min(1.0, task_step / self.eps_decay_steps)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@dataclass(frozen=True)
class Ablation:
    """Component knock-outs; all False reproduces the full method."""

    no_crystallization: bool = False
    no_lr_modulation: bool = False
    no_interference: bool = False
    w2_zero: bool = False
    w3_zero: bool = False
    single_buffer: bool = False
    sigma_zero: bool = False
    random_v: bool = False


@dataclass
class ContinualMetrics:
    average_performance: float
    backward_transfer: float | None
    forward_transfer: float | None
    task1_retention: float

    def to_dict(self) -> dict:
        return {
            "average_performance": self.average_performance,
            "backward_transfer": self.backward_transfer,
            "forward_transfer": self.forward_transfer,
            "task1_retention": self.task1_retention,
        }


class QTable:
    """Dense state-action table with range projection |Q| <= bound."""

    def __init__(self, states, n_actions: int, bound: float):
        if bound <= 0 or not math.isfinite(bound):
            raise ValueError("bound must be positive and finite")
        self.n_actions = n_actions
        self.bound = bound
        self._values = {(s, a): 0.0 for s in states for a in range(n_actions)}

    def value(self, state, action) -> float:
        return self._values[(state, action)]

    def set(self, state, action, v: float) -> None:
        if (state, action) not in self._values:
            raise KeyError(f"unknown state-action {(state, action)}")
        if not math.isfinite(v):
            raise ValueError("non-finite Q update")
        self._values[(state, action)] = min(self.bound, max(-self.bound, v))

    def max_value(self, state) -> float:
        return max(self._values[(state, a)] for a in range(self.n_actions))

    def argmax(self, state) -> int:
        vals = [self._values[(state, a)] for a in range(self.n_actions)]
        return int(np.argmax(vals))

    def copy_from(self, other: "QTable") -> None:
        self._values.update(other._values)

    def clone(self) -> "QTable":
        out = QTable.__new__(QTable)
        out.n_actions = self.n_actions
        out.bound = self.bound
        out._values = dict(self._values)
        return out

    def as_dict(self) -> dict:
        return dict(self._values)


def train_step(
    q: QTable,
    target_q: QTable,
    batch: list[tuple[Experience, float]],
    cfg: AgentConfig,
    t: int,
    lr_modulation: bool = True,
) -> None:
    """Gradient step on the squared TD loss for one weighted batch."""
    if not batch:
        raise ValueError("batch must be non-empty")
    eta_base = cfg.eta_base(t)
    for exp, w in batch:
        eta = effective_lr(eta_base, exp.c) if lr_modulation else eta_base
        y = exp.reward
        if not exp.done:
            y += cfg.gamma * target_q.max_value(exp.next_state)
        old = q.value(exp.state, exp.action)
        q.set(exp.state, exp.action, old - eta * w * 2.0 * (old - y))


@dataclass
class RunResult:
    metrics: ContinualMetrics
    eval_matrix: list[list[float]]
    episode_rows: list[dict]
    q_after_task: list[dict]
    final_q: QTable


EPISODE_CSV_HEADER = ("step,task,return,n_liquid,n_glass,n_crystal,"
                      "mean_c_liquid,mean_c_glass,mean_c_crystal")


def _evaluate_all(seq: TaskSequence, q: QTable, n_episodes: int) -> list[float]:
    # deterministic greedy policy on a deterministic env: episodes repeat,
    # so the mean over the protocol's episodes equals a single rollout
    return [float(np.mean([greedy_return(task, q) for _ in range(n_episodes)]))
            for task in seq.tasks]


def run_agent(
    seq: TaskSequence,
    cfg: AgentConfig,
    sde: SdeParams,
    weights: UtilityWeights,
    ip: InterferenceParams,
    th: Thresholds,
    sampling: SamplingConfig,
    capacities: tuple[int, int, int],
    seed: int,
    k: int = 10,
    ablation: Ablation = Ablation(),
) -> RunResult:
    """Full consolidating-agent run over a task sequence."""
    if ablation.sigma_zero:
        sde = replace(sde, sigma=0.0)
    if ablation.w2_zero:
        s = weights.w1 + weights.w3
        weights = UtilityWeights(weights.w1 / s, 0.0, weights.w3 / s)
    if ablation.w3_zero:
        s = weights.w1 + weights.w2
        weights = UtilityWeights(weights.w1 / s, weights.w2 / s, 0.0)

    agent_rng = substream(seed, "agent")
    sde_rng = substream(seed, "sde")
    sample_rng = substream(seed, "sampling")
    rv_rng = substream(seed, "random-v") if ablation.random_v else None

    r_max = max(t.r_max for t in seq.tasks)
    bound = r_max / (1.0 - cfg.gamma)
    all_states = sorted({s for t in seq.tasks for s in t.states()})
    q = QTable(all_states, N_ACTIONS, bound)
    target_q = q.clone()
    buffers = PhaseBuffers(*capacities)

    eval_matrix: list[list[float]] = []
    episode_rows: list[dict] = []
    q_after_task: list[dict] = []
    global_step = 0
    last_consol = -1

    def consolidate_once():
        nonlocal last_consol
        if last_consol == global_step:
            return
        last_consol = global_step
        if len(buffers) == 0:
            return
        buffers.consolidate(
            q, sde, weights, ip, th, sde_rng,
            gamma=cfg.gamma, td_scale=bound, k=k,
            crystallize=not ablation.no_crystallization,
            interference_on=not ablation.no_interference,
            random_v_rng=rv_rng,
            transfer=not ablation.single_buffer,
        )

    for task_idx, task in enumerate(seq.tasks):
        task_step = 0
        for _ep in range(cfg.episodes_per_task):
            state = task.start
            ep_return = 0.0
            ep_exps: list[Experience] = []
            for t in range(task.max_steps):
                eps = cfg.epsilon(task_step)
                if agent_rng.random() < eps:
                    action = int(agent_rng.integers(0, N_ACTIONS))
                else:
                    action = q.argmax(state)
                nxt, reward, done = step(task, state, action, t=t)
                terminal = nxt == task.goal or nxt in task.penalty_cells
                exp = Experience(state=state, action=action, reward=reward,
                                 next_state=nxt, done=terminal)
                exp.insert_step = global_step
                buffers.insert(exp)
                ep_exps.append(exp)
                ep_return += reward
                global_step += 1
                task_step += 1
                if global_step % cfg.f_train == 0 and len(buffers) >= cfg.b_min:
                    batch = buffers.stratified_sample(sampling, sample_rng)
                    train_step(q, target_q, batch, cfg, global_step,
                               lr_modulation=not ablation.no_lr_modulation)
                if global_step % cfg.f_consol == 0:
                    consolidate_once()
                if global_step % cfg.f_target == 0:
                    target_q.copy_from(q)
                state = nxt
                if done:
                    break
            boost = max(0.0, min(1.0, ep_return / bound))
            for e in ep_exps:
                e.pending_boost = min(1.0, e.pending_boost + boost)
            consolidate_once()
            episode_rows.append({
                "step": global_step, "task": task_idx, "return": ep_return,
                "n_liquid": len(buffers.liquid), "n_glass": len(buffers.glass),
                "n_crystal": len(buffers.crystal),
                "mean_c_liquid": _mean_c(buffers.liquid),
                "mean_c_glass": _mean_c(buffers.glass),
                "mean_c_crystal": _mean_c(buffers.crystal),
            })
        eval_matrix.append(_evaluate_all(seq, q, cfg.eval_episodes))
        q_after_task.append(q.as_dict())

    metrics = compute_metrics(eval_matrix)
    return RunResult(metrics, eval_matrix, episode_rows, q_after_task, q)


def run_baseline(
    kind: str,
    seq: TaskSequence,
    cfg: AgentConfig,
    seed: int,
    buffer_size: int,
    batch_size: int = 32,
    priority_exponent: float = 0.6,
    is_exponent: float = 0.4,
) -> RunResult:
    """Vanilla (uniform) or TD-prioritized replay over a single FIFO buffer."""
    if kind not in ("vanilla", "prioritized"):
        raise ValueError(f"unknown baseline {kind!r}")
    agent_rng = substream(seed, "agent")
    sample_rng = substream(seed, "sampling")

    r_max = max(t.r_max for t in seq.tasks)
    bound = r_max / (1.0 - cfg.gamma)
    all_states = sorted({s for t in seq.tasks for s in t.states()})
    q = QTable(all_states, N_ACTIONS, bound)
    target_q = q.clone()
    buffer: list[Experience] = []

    eval_matrix: list[list[float]] = []
    episode_rows: list[dict] = []
    q_after_task: list[dict] = []
    global_step = 0

    for task_idx, task in enumerate(seq.tasks):
        task_step = 0
        for _ep in range(cfg.episodes_per_task):
            state = task.start
            ep_return = 0.0
            for t in range(task.max_steps):
                eps = cfg.epsilon(task_step)
                if agent_rng.random() < eps:
                    action = int(agent_rng.integers(0, N_ACTIONS))
                else:
                    action = q.argmax(state)
                nxt, reward, done = step(task, state, action, t=t)
                terminal = nxt == task.goal or nxt in task.penalty_cells
                exp = Experience(state=state, action=action, reward=reward,
                                 next_state=nxt, done=terminal)
                exp.insert_step = global_step
                buffer.append(exp)
                if len(buffer) > buffer_size:
                    buffer.pop(0)  # FIFO
                ep_return += reward
                global_step += 1
                task_step += 1
                if global_step % cfg.f_train == 0 and len(buffer) >= cfg.b_min:
                    batch = _baseline_sample(
                        kind, buffer, q, target_q, cfg.gamma, batch_size,
                        priority_exponent, is_exponent, sample_rng)
                    train_step(q, target_q, batch, cfg, global_step,
                               lr_modulation=False)
                if global_step % cfg.f_target == 0:
                    target_q.copy_from(q)
                state = nxt
                if done:
                    break
            episode_rows.append({
                "step": global_step, "task": task_idx, "return": ep_return,
                "n_liquid": len(buffer), "n_glass": 0, "n_crystal": 0,
                "mean_c_liquid": 0.0, "mean_c_glass": 0.0, "mean_c_crystal": 0.0,
            })
        eval_matrix.append(_evaluate_all(seq, q, cfg.eval_episodes))
        q_after_task.append(q.as_dict())

    metrics = compute_metrics(eval_matrix)
    return RunResult(metrics, eval_matrix, episode_rows, q_after_task, q)


def _baseline_sample(kind, buffer, q, target_q, gamma, batch_size,
                     priority_exponent, is_exponent, rng):
    n = len(buffer)
    if kind == "vanilla":
        picks = rng.integers(0, n, size=batch_size)
        return [(buffer[int(i)], 1.0) for i in picks]
    deltas = np.array([
        abs(e.reward
            + (0.0 if e.done else gamma * target_q.max_value(e.next_state))
            - q.value(e.state, e.action))
        for e in buffer
    ])
    pr = deltas ** priority_exponent
    total = pr.sum()
    probs = pr / total if total > 0 else np.full(n, 1.0 / n)
    picks = rng.choice(n, size=batch_size, p=probs)
    raw = [(n * probs[int(i)]) ** (-is_exponent) for i in picks]
    peak = max(raw)
    return [(buffer[int(i)], w / peak) for i, w in zip(picks, raw)]


def compute_metrics(
    eval_matrix: list[list[float]],
    scratch_returns: list[float] | None = None,
) -> ContinualMetrics:
    """Continual-learning summary from the stage-by-task return matrix.

    eval_matrix[j][k] is the return on task k after training stage j.
    """
    n_stages = len(eval_matrix)
    if n_stages == 0:
        raise ValueError("empty evaluation matrix")
    n_tasks = len(eval_matrix[0])
    if any(len(row) != n_tasks for row in eval_matrix):
        raise ValueError("ragged evaluation matrix")
    if n_stages != n_tasks:
        raise ValueError("need one evaluation stage per task")
    final = eval_matrix[-1]
    ap = float(np.mean(final))
    if n_tasks == 1:
        return ContinualMetrics(ap, None, None, 1.0 if final[0] else 1.0)
    bt = float(np.mean([final[k] - eval_matrix[k][k] for k in range(n_tasks - 1)]))
    ft = None
    if scratch_returns is not None:
        if len(scratch_returns) != n_tasks:
            raise ValueError("need one scratch return per task")
        ft = float(np.mean([eval_matrix[k - 1][k] - scratch_returns[k]
                            for k in range(1, n_tasks)]))
    first = eval_matrix[0][0]
    retention = final[0] / first if first != 0 else float("nan")
    return ContinualMetrics(ap, bt, ft, retention)


def _mean_c(store) -> float:
    return float(np.mean([e.c for e in store])) if store else 0.0
