import json

import numpy as np
import pytest

from crystal_replay.envs import (
    ACTIONS,
    N_ACTIONS,
    GridTask,
    TaskSequence,
    greedy_return,
    make_reward_flip_sequence,
    step,
    value_iteration,
)


def small_task(**kw):
    args = dict(width=4, height=4, start=(0, 0), goal=(3, 3), max_steps=50)
    args.update(kw)
    return GridTask(**args)


def manhattan(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


class TestGridTask:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_task(start=(3, 3))  # start == goal
        with pytest.raises(ValueError):
            small_task(goal=(4, 4))  # out of bounds
        with pytest.raises(ValueError):
            small_task(max_steps=0)
        with pytest.raises(ValueError):
            GridTask(width=1, height=4, start=(0, 0), goal=(3, 0))

    def test_unreachable_goal_rejected(self):
        walls = frozenset({(2, 3), (3, 2), (2, 2)})
        with pytest.raises(ValueError):
            small_task(walls=walls)

    def test_r_max(self):
        t = small_task(goal_reward=1.0, penalty_reward=-2.0)
        assert t.r_max == 2.0

    def test_states_excludes_walls(self):
        t = small_task(walls=frozenset({(1, 1)}))
        assert (1, 1) not in t.states()
        assert len(t.states()) == 15

    def test_dict_round_trip(self):
        t = small_task(penalty_cells=((2, 2),), walls=frozenset({(1, 1)}))
        assert GridTask.from_dict(t.to_dict()) == t

    def test_sequence_json_round_trip(self):
        seq = make_reward_flip_sequence(3, grid=(6, 6), seed=7)
        back = TaskSequence.from_json(seq.to_json())
        assert back == seq


class TestStep:
    def test_border_blocks(self):
        t = small_task()
        nxt, r, done = step(t, (0, 0), 0)  # up against border
        assert nxt == (0, 0) and r == 0.0 and done is False

    def test_wall_blocks(self):
        t = small_task(walls=frozenset({(0, 1)}))
        nxt, _, _ = step(t, (0, 0), 3)  # right into wall
        assert nxt == (0, 0)

    def test_goal_terminal(self):
        t = small_task()
        nxt, r, done = step(t, (3, 2), 3)
        assert nxt == (3, 3) and r == 1.0 and done is True

    def test_penalty_terminal_flipped(self):
        t = small_task(penalty_cells=((2, 2),), penalty_reward=-1.0)
        nxt, r, done = step(t, (2, 1), 3)
        assert nxt == (2, 2) and r == -1.0 and done is True

    def test_time_limit(self):
        t = small_task(max_steps=5)
        _, _, done = step(t, (0, 0), 0, t=3)
        assert done is False
        _, _, done = step(t, (0, 0), 0, t=4)
        assert done is True

    def test_illegal_inputs(self):
        t = small_task(walls=frozenset({(1, 1)}))
        with pytest.raises(ValueError):
            step(t, (1, 1), 0)
        with pytest.raises(ValueError):
            step(t, (0, 0), 4)
        with pytest.raises(ValueError):
            step(small_task(slip=0.3), (0, 0), 0)  # slip needs rng

    def test_reference_rollout_oracle(self):
        """Independent re-implementation of the transition rule must
        agree with step() over a long random rollout."""
        t = small_task(penalty_cells=((1, 3),), walls=frozenset({(2, 1)}),
                       step_reward=-0.01, max_steps=200)
        rng = np.random.default_rng(0)
        state, k = t.start, 0
        for _ in range(1000):
            a = int(rng.integers(N_ACTIONS))
            got = step(t, state, a, t=k)
            # oracle
            dr, dc = ACTIONS[a]
            cand = (state[0] + dr, state[1] + dc)
            inside = 0 <= cand[0] < t.height and 0 <= cand[1] < t.width
            nxt = cand if inside and cand not in t.walls else state
            if nxt == t.goal:
                r, done = t.goal_reward, True
            elif nxt in t.penalty_cells:
                r, done = t.penalty_reward, True
            else:
                r, done = t.step_reward, False
            done = done or (k + 1 >= t.max_steps)
            assert got == (nxt, r, done)
            if done:
                state, k = t.start, 0
            else:
                state, k = nxt, k + 1


class TestRewardFlipSequence:
    def test_structure(self):
        seq = make_reward_flip_sequence(5, grid=(8, 8), seed=42)
        tasks = seq.tasks
        assert len(tasks) == 5
        goals = [t.goal for t in tasks]
        assert len(set(goals)) == 5
        for k, t in enumerate(tasks):
            # penalty cells are exactly all earlier goals, reward flipped
            assert t.penalty_cells == tuple(goals[:k])
            assert t.penalty_reward == -t.goal_reward
            # start is strictly closer to own goal than to any other goal
            d_own = manhattan(t.start, t.goal)
            for g in goals:
                if g != t.goal:
                    assert manhattan(t.start, g) > d_own

    def test_goals_well_separated(self):
        seq = make_reward_flip_sequence(5, grid=(8, 8), seed=42)
        goals = [t.goal for t in seq.tasks]
        for i in range(len(goals)):
            for j in range(i + 1, len(goals)):
                assert manhattan(goals[i], goals[j]) >= 3

    def test_deterministic_in_seed(self):
        a = make_reward_flip_sequence(4, grid=(8, 8), seed=3)
        b = make_reward_flip_sequence(4, grid=(8, 8), seed=3)
        c = make_reward_flip_sequence(4, grid=(8, 8), seed=4)
        assert a == b
        assert a != c


class TestValueIteration:
    def test_matches_shortest_path_value(self):
        # deterministic grid, zero step reward: V*(start) = gamma^(d-1)
        t = small_task()
        gamma = 0.9
        q = value_iteration(t, gamma)
        d = manhattan(t.start, t.goal)
        v_start = max(q[(t.start, a)] for a in range(N_ACTIONS))
        assert v_start == pytest.approx(gamma ** (d - 1), abs=1e-10)

    def test_terminal_cells_zero(self):
        t = small_task(penalty_cells=((2, 2),))
        q = value_iteration(t, 0.9)
        for a in range(N_ACTIONS):
            assert q[(t.goal, a)] == 0.0
            assert q[((2, 2), a)] == 0.0

    def test_penalty_adjacent_action_value(self):
        # stepping into a terminal penalty cell is worth exactly its reward
        t = small_task(penalty_cells=((2, 2),), penalty_reward=-1.0)
        q = value_iteration(t, 0.9)
        assert q[((2, 1), 3)] == -1.0  # move right into (2, 2)

    def test_bellman_residual_zero(self):
        t = small_task(penalty_cells=((1, 3),), walls=frozenset({(2, 1)}),
                       step_reward=-0.01)
        gamma = 0.95
        q = value_iteration(t, gamma)
        terminal = {t.goal, *t.penalty_cells}
        for s in t.states():
            if s in terminal:
                continue
            for a in range(N_ACTIONS):
                nxt, r, done = step(t, s, a)
                bootstrap = 0.0 if done else gamma * max(
                    q[(nxt, b)] for b in range(N_ACTIONS))
                assert q[(s, a)] == pytest.approx(r + bootstrap, abs=1e-9)

    def test_slip_rejected(self):
        with pytest.raises(ValueError):
            value_iteration(small_task(slip=0.2), 0.9)


class _QDict:
    def __init__(self, table):
        self.table = table

    def value(self, s, a):
        return self.table[(s, a)]


class TestGreedyReturn:
    def test_optimal_policy_reaches_goal(self):
        t = small_task()
        q = _QDict(value_iteration(t, 0.95))
        assert greedy_return(t, q) == 1.0

    def test_uniform_q_times_out(self):
        t = small_task(max_steps=10)
        q = _QDict({(s, a): 0.0 for s in t.states() for a in range(N_ACTIONS)})
        # argmax ties break to action 0 (up): stuck against the border
        assert greedy_return(t, q) == 0.0

    def test_all_flip_tasks_solvable_by_their_oracle(self):
        seq = make_reward_flip_sequence(5, grid=(8, 8), seed=42)
        for t in seq.tasks:
            q = _QDict(value_iteration(t, 0.95))
            assert greedy_return(t, q) == t.goal_reward
