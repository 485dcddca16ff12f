import math

import numpy as np
import pytest

from crystal_replay.agent import (
    Ablation,
    AgentConfig,
    QTable,
    compute_metrics,
    run_agent,
    run_baseline,
    train_step,
)
from crystal_replay.envs import GridTask, TaskSequence, make_reward_flip_sequence
from crystal_replay.memory import SamplingConfig, Thresholds
from crystal_replay.sde import SdeParams
from crystal_replay.utility import Experience, InterferenceParams, UtilityWeights

CFG = AgentConfig()


class TestAgentConfig:
    def test_eta_base_decay(self):
        cfg = AgentConfig(eta0=0.5, lr_decay=1e-3)
        assert cfg.eta_base(0) == 0.5
        assert cfg.eta_base(1000) == pytest.approx(0.25)

    def test_epsilon_schedule(self):
        cfg = AgentConfig(eps_start=1.0, eps_end=0.1, eps_decay_steps=100)
        assert cfg.epsilon(0) == 1.0
        assert cfg.epsilon(50) == pytest.approx(0.55)
        assert cfg.epsilon(100) == pytest.approx(0.1)
        assert cfg.epsilon(10_000) == pytest.approx(0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            AgentConfig(gamma=1.0)
        with pytest.raises(ValueError):
            AgentConfig(eps_end=0.5, eps_start=0.1)
        with pytest.raises(ValueError):
            AgentConfig(eta0=0.0)


class TestQTable:
    STATES = [(0, 0), (0, 1)]

    def test_roundtrip_and_projection(self):
        q = QTable(self.STATES, 2, bound=10.0)
        q.set((0, 0), 1, 3.5)
        assert q.value((0, 0), 1) == 3.5
        q.set((0, 0), 1, 99.0)
        assert q.value((0, 0), 1) == 10.0
        q.set((0, 0), 1, -99.0)
        assert q.value((0, 0), 1) == -10.0

    def test_max_and_argmax(self):
        q = QTable(self.STATES, 3, bound=10.0)
        q.set((0, 1), 2, 4.0)
        assert q.max_value((0, 1)) == 4.0
        assert q.argmax((0, 1)) == 2
        assert q.argmax((0, 0)) == 0  # tie breaks low

    def test_unknown_key_and_nonfinite(self):
        q = QTable(self.STATES, 2, bound=10.0)
        with pytest.raises(KeyError):
            q.value((9, 9), 0)
        with pytest.raises(KeyError):
            q.set((9, 9), 0, 1.0)
        with pytest.raises(ValueError):
            q.set((0, 0), 0, float("nan"))

    def test_clone_is_independent(self):
        q = QTable(self.STATES, 2, bound=10.0)
        c = q.clone()
        c.set((0, 0), 0, 5.0)
        assert q.value((0, 0), 0) == 0.0


class TestTrainStep:
    def _tables(self):
        states = [(0, 0), (0, 1)]
        q = QTable(states, 2, bound=100.0)
        return q, q.clone()

    def test_unit_step_jumps_to_target(self):
        # eta*w*2 = 1 moves Q fully onto the target
        q, tq = self._tables()
        cfg = AgentConfig(eta0=0.5, lr_decay=1e-12)
        e = Experience(state=(0, 0), action=0, reward=3.0, next_state=(0, 1),
                       done=True)
        train_step(q, tq, [(e, 1.0)], cfg, t=0, lr_modulation=False)
        assert q.value((0, 0), 0) == pytest.approx(3.0)

    def test_crystallized_experience_frozen(self):
        q, tq = self._tables()
        e = Experience(state=(0, 0), action=0, reward=3.0, next_state=(0, 1),
                       done=True)
        e.c = 1.0
        train_step(q, tq, [(e, 1.0)], CFG, t=0, lr_modulation=True)
        assert q.value((0, 0), 0) == 0.0

    def test_modulation_scales_update(self):
        cfg = AgentConfig(eta0=0.5, lr_decay=1e-12)
        e = Experience(state=(0, 0), action=0, reward=1.0, next_state=(0, 1),
                       done=True)
        e.c = 0.7
        q, tq = self._tables()
        train_step(q, tq, [(e, 1.0)], cfg, t=0, lr_modulation=True)
        # effective eta = 0.5 * 0.09; update = 2*eta*(y - old)
        assert q.value((0, 0), 0) == pytest.approx(2 * 0.5 * 0.09 * 1.0)

    def test_bootstrap_uses_target_network(self):
        q, tq = self._tables()
        cfg = AgentConfig(gamma=0.5, eta0=0.5, lr_decay=1e-12)
        tq.set((0, 1), 1, 4.0)
        e = Experience(state=(0, 0), action=0, reward=1.0, next_state=(0, 1))
        train_step(q, tq, [(e, 1.0)], cfg, t=0, lr_modulation=False)
        assert q.value((0, 0), 0) == pytest.approx(1.0 + 0.5 * 4.0)

    def test_empty_batch_rejected(self):
        q, tq = self._tables()
        with pytest.raises(ValueError):
            train_step(q, tq, [], CFG, t=0)

    def test_two_state_mdp_converges_to_value_iteration(self):
        # chain: s0 --a0--> s1 --a0--> terminal reward 1; exact solution
        # Q(s1,a0)=1, Q(s0,a0)=gamma
        gamma = 0.9
        cfg = AgentConfig(gamma=gamma, eta0=0.25, lr_decay=1e-12)
        states = [(0, 0), (0, 1)]
        q = QTable(states, 1, bound=100.0)
        e0 = Experience(state=(0, 0), action=0, reward=0.0, next_state=(0, 1))
        e1 = Experience(state=(0, 1), action=0, reward=1.0, next_state=(0, 0),
                        done=True)
        for _ in range(400):
            tq = q.clone()
            for _ in range(10):
                train_step(q, tq, [(e0, 1.0), (e1, 1.0)], cfg, t=0,
                           lr_modulation=False)
        assert q.value((0, 1), 0) == pytest.approx(1.0, abs=1e-6)
        assert q.value((0, 0), 0) == pytest.approx(gamma, abs=1e-6)

    def test_robbins_monro_schedule(self):
        # eta_t = eta0/(1+kappa t): divergent sum, convergent sum of squares
        cfg = AgentConfig(eta0=0.5, lr_decay=1e-2)
        etas = np.array([cfg.eta_base(t) for t in range(100_000)])
        assert etas.sum() > 100.0  # grows like log t
        assert np.sum(etas**2) < 0.25 * (1 + math.pi**2 / 6) / 1e-2 + 30


class TestComputeMetrics:
    MATRIX = [
        [0.9, 0.0, 0.0],
        [0.6, 0.8, 0.1],
        [0.3, 0.5, 0.7],
    ]

    def test_arithmetic_oracle(self):
        m = compute_metrics(self.MATRIX)
        assert m.average_performance == pytest.approx((0.3 + 0.5 + 0.7) / 3)
        assert m.backward_transfer == pytest.approx(
            ((0.3 - 0.9) + (0.5 - 0.8)) / 2)
        assert m.forward_transfer is None
        assert m.task1_retention == pytest.approx(0.3 / 0.9)

    def test_forward_transfer_with_scratch(self):
        m = compute_metrics(self.MATRIX, scratch_returns=[0.9, 0.05, 0.05])
        assert m.forward_transfer == pytest.approx(
            ((0.0 - 0.05) + (0.1 - 0.05)) / 2)

    def test_single_task(self):
        m = compute_metrics([[0.5]])
        assert m.average_performance == 0.5
        assert m.backward_transfer is None
        assert m.forward_transfer is None

    def test_validation(self):
        with pytest.raises(ValueError):
            compute_metrics([])
        with pytest.raises(ValueError):
            compute_metrics([[1.0, 2.0], [1.0]])
        with pytest.raises(ValueError):
            compute_metrics([[1.0, 2.0]])  # stages != tasks
        with pytest.raises(ValueError):
            compute_metrics(self.MATRIX, scratch_returns=[0.1])

    def test_zero_first_eval_gives_nan_retention(self):
        m = compute_metrics([[0.0, 0.0], [0.0, 0.5]])
        assert math.isnan(m.task1_retention)


def tiny_sequence():
    return make_reward_flip_sequence(2, grid=(5, 5), seed=1, max_steps=30)


def tiny_agent_kwargs(seed=0, **over):
    cfg = AgentConfig(episodes_per_task=8, b_min=16, f_consol=20,
                      eps_decay_steps=150, eval_episodes=2)
    kw = dict(
        seq=tiny_sequence(), cfg=cfg, sde=SdeParams(),
        weights=UtilityWeights(), ip=InterferenceParams(),
        th=Thresholds(), sampling=SamplingConfig(batch_size=16),
        capacities=(200, 100, 50), seed=seed,
    )
    kw.update(over)
    return kw


class TestRunAgent:
    def test_deterministic_in_seed(self):
        a = run_agent(**tiny_agent_kwargs(seed=3))
        b = run_agent(**tiny_agent_kwargs(seed=3))
        assert a.eval_matrix == b.eval_matrix
        assert a.final_q.as_dict() == b.final_q.as_dict()
        assert a.episode_rows == b.episode_rows

    def test_seeds_differ(self):
        a = run_agent(**tiny_agent_kwargs(seed=3))
        b = run_agent(**tiny_agent_kwargs(seed=4))
        assert a.final_q.as_dict() != b.final_q.as_dict()

    def test_shapes_and_ranges(self):
        r = run_agent(**tiny_agent_kwargs())
        assert len(r.eval_matrix) == 2 and len(r.eval_matrix[0]) == 2
        assert len(r.episode_rows) == 16
        assert len(r.q_after_task) == 2
        for row in r.episode_rows:
            assert 0.0 <= row["mean_c_liquid"] <= 1.0
            assert row["n_liquid"] <= 200

    def test_q_respects_bound(self):
        r = run_agent(**tiny_agent_kwargs())
        bound = 1.0 / (1.0 - AgentConfig().gamma)
        assert all(abs(v) <= bound + 1e-12 for v in r.final_q.as_dict().values())

    def test_single_buffer_ablation_keeps_everything_liquid(self):
        r = run_agent(**tiny_agent_kwargs(ablation=Ablation(single_buffer=True)))
        assert all(row["n_glass"] == 0 and row["n_crystal"] == 0
                   for row in r.episode_rows)

    def test_no_crystallization_keeps_c_zero(self):
        r = run_agent(**tiny_agent_kwargs(ablation=Ablation(no_crystallization=True)))
        assert all(row["mean_c_liquid"] == 0.0 for row in r.episode_rows)

    def test_crystallization_populates_phases(self):
        r = run_agent(**tiny_agent_kwargs())
        last = r.episode_rows[-1]
        assert last["n_glass"] + last["n_crystal"] > 0


class TestRunBaseline:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            run_baseline("dreamer", tiny_sequence(), CFG, 0, buffer_size=100)

    def test_deterministic_in_seed(self):
        cfg = AgentConfig(episodes_per_task=8, b_min=16, eps_decay_steps=150,
                          eval_episodes=2)
        a = run_baseline("vanilla", tiny_sequence(), cfg, 5, buffer_size=300,
                         batch_size=16)
        b = run_baseline("vanilla", tiny_sequence(), cfg, 5, buffer_size=300,
                         batch_size=16)
        assert a.eval_matrix == b.eval_matrix
        assert a.final_q.as_dict() == b.final_q.as_dict()

    def test_fifo_eviction(self):
        cfg = AgentConfig(episodes_per_task=8, b_min=16, eps_decay_steps=150,
                          eval_episodes=2)
        r = run_baseline("vanilla", tiny_sequence(), cfg, 0, buffer_size=50,
                         batch_size=16)
        assert all(row["n_liquid"] <= 50 for row in r.episode_rows)

    def test_prioritized_runs_and_differs_from_vanilla(self):
        cfg = AgentConfig(episodes_per_task=8, b_min=16, eps_decay_steps=150,
                          eval_episodes=2)
        v = run_baseline("vanilla", tiny_sequence(), cfg, 0, buffer_size=300,
                         batch_size=16)
        p = run_baseline("prioritized", tiny_sequence(), cfg, 0, buffer_size=300,
                         batch_size=16)
        assert v.final_q.as_dict() != p.final_q.as_dict()
