import math

import pytest

from conftest import make_scenario
from hrl_interleave.environment import CONTINUE, LEAVE, EnvState, TaskEnvironment
from hrl_interleave.flat_agent import value_iteration
from hrl_interleave.hrl_agent import (LearningConfig, continue_value, distinct_entries,
                                      greedy_action, leave_value, new_policy, root_key,
                                      root_option_values, train, update_root_q, update_type_q)
from hrl_interleave.scenarios import Mode, builtin_scenario
from hrl_interleave.task_model import ParamSet, ValidationError, make_task_type


def fresh(scenario, **config):
    return new_policy(scenario, LearningConfig(**config)), TaskEnvironment(scenario)


class TestUpdateTypeQ:
    def test_zero_discount(self, single_task):
        policy, env = fresh(single_task, alpha=1.0, gamma_t=0.0)
        rec = env.step_type(EnvState((0,), 0, 0), CONTINUE)
        assert update_type_q(policy, rec, env, policy.config) == 1.0
        assert policy.type_tables["chain"].q(0, CONTINUE) == 1.0

    def test_two_state_chain(self):
        scenario = make_scenario(("A", make_task_type("c", [1.0, 2.0], [0.0, 0.0])))
        policy, env = fresh(scenario, alpha=1.0, gamma_t=1.0)
        for _ in range(3):
            for state in (0, 1):
                update_type_q(policy, env.step_type(EnvState((state,), 0, 0), CONTINUE), env,
                              policy.config)
        table = policy.type_tables["c"]
        assert table.q(0, CONTINUE) == 3.0 and table.q(1, CONTINUE) == 2.0

    def test_leave(self):
        scenario = make_scenario(("A", make_task_type("c", [1.0, 1.0], [0.0, 2.0])))
        policy, env = fresh(scenario, alpha=1.0)
        rec = env.step_type(EnvState((1,), 0, 0), LEAVE)
        update_type_q(policy, rec, env, policy.config)
        assert policy.type_tables["c"].q(1, LEAVE) == -2.0
        assert policy.type_tables["c"].visited == {(1, 1)}

    def test_truncation_not_learned(self, single_task):
        policy, env = fresh(single_task, alpha=1.0)
        rec = env.step_type(EnvState((0,), 0, 0, 0.5, 1.0), CONTINUE)
        assert rec.is_truncation
        assert update_type_q(policy, rec, env, policy.config) is None
        assert policy.type_tables["chain"].visited == set()


class TestUpdateRootQ:
    def test_target(self):
        scenario = make_scenario(("A", make_task_type("c", [4.0], [0.5])))
        policy, env = fresh(scenario, alpha=1.0)
        policy.type_tables["c"].values[0] = [4.0, -0.5]
        selection = env.step_root(env.reset(), 0)
        assert selection.reward == -0.5
        assert update_root_q(policy, selection, env, policy.config) == pytest.approx(3.5)
        assert policy.root.values[root_key(env, selection.pre)][0] == pytest.approx(3.5)

    def test_zero_root_discount(self, two_task):
        targets = []
        for stored in (0.0, 100.0):
            policy, env = fresh(two_task, alpha=1.0, gamma_r=0.0)
            policy.root.values[((1, 0), 0)] = {0: stored, 1: stored}
            policy.root.values[((3, 0), -1)] = {1: stored}
            selection = env.step_root(env.reset(), 0)
            targets.append(update_root_q(policy, selection, env, policy.config))
        assert targets[0] == targets[1]

    def test_unvisited_bootstrap_zero(self):
        scenario = make_scenario(("A", make_task_type("c", [1.0], [0.0])),
                                 ("B", make_task_type("d", [1.0], [0.0])))
        policy, env = fresh(scenario)
        s = EnvState((0, 1), None, 1)
        assert root_option_values(policy, env, s) == {0: 0.0}


class TestGreedyAction:
    def test_strict_argmax(self, single_task):
        # at the last state with gamma_r = 0 the table entries are the full action values
        policy, env = fresh(single_task, gamma_r=0.0)
        policy.type_tables["chain"].values[2] = [2.0, 1.0]
        assert continue_value(policy, env, (2,), 0) == 2.0
        assert leave_value(policy, env, (2,), 0) == 1.0
        assert greedy_action(policy, EnvState((2,), 0, 0), env) == CONTINUE
        policy.type_tables["chain"].values[2] = [1.0, 2.0]
        assert greedy_action(policy, EnvState((2,), 0, 0), env) == LEAVE

    def test_tie_continue(self, single_task):
        policy, env = fresh(single_task)
        s = EnvState((2,), 0, 0)
        assert continue_value(policy, env, (2,), 0) == leave_value(policy, env, (2,), 0) == 0.0
        assert greedy_action(policy, s, env) == CONTINUE

    def test_unseen_root_lowest_id(self):
        t = make_task_type("t", [0.0, 0.0], [0.0, 0.0])
        scenario = make_scenario(("b", t), ("c", t), ("a", t))
        policy, env = fresh(scenario)
        assert greedy_action(policy, env.reset(), env) == 2

    def test_terminal(self, single_task):
        policy, env = fresh(single_task)
        with pytest.raises(ValueError):
            greedy_action(policy, EnvState((3,)), env)


class TestDistinctEntries:
    def test_untrained(self, two_task):
        policy, _ = fresh(two_task)
        assert distinct_entries(policy) == (0, 0)

    def test_single_task_bound(self, single_task):
        policy = train(single_task, LearningConfig(episodes=200))
        type_entries, root_entries = distinct_entries(policy)
        assert 0 < type_entries <= 6 and root_entries >= 1


def test_single_instance_runs_to_completion(single_task):
    env = TaskEnvironment(single_task)
    for seed in range(5):
        policy = train(single_task, LearningConfig(episodes=100, seed=seed))
        trace = env.rollout(policy, env.reset())
        assert all(r.action != LEAVE for r in trace.records)


@pytest.mark.parametrize("gamma_t,gamma_r", [(1.0, 1.0), (0.9, 0.95), (0.3, 0.99)])
def test_alpha_one_sweeps_match_value_iteration(gamma_t, gamma_r):
    """Deterministic single task: repeated alpha=1 sweeps reach the exact fixed point."""
    t = make_task_type("c", [1.0, 0.0, 0.0, 5.0, 0.5], [0.3, 2.0, 0.0, 1.0, 0.4], dwell=1.5)
    scenario = make_scenario(("A", t))
    policy, env = fresh(scenario, alpha=1.0, gamma_t=gamma_t, gamma_r=gamma_r)
    for _ in range(t.length + 2):
        for state in range(t.length):
            for a in (CONTINUE, LEAVE):
                update_type_q(policy, env.step_type(EnvState((state,), 0, 0), a), env,
                              policy.config)
        update_root_q(policy, env.step_root(env.reset(), 0), env, policy.config)
    vi = value_iteration(scenario, gamma_t, gamma_r)
    for state in range(t.length):
        cont, leave = vi.q_type[(0, (state,))]
        assert continue_value(policy, env, (state,), 0) == pytest.approx(cont, abs=1e-9)
        assert leave_value(policy, env, (state,), 0) == pytest.approx(leave, abs=1e-9)
    assert policy.root.values[((0,), None)][0] == pytest.approx(vi.start_value, abs=1e-9)


@pytest.mark.parametrize("k", [0.5, 3.0])
def test_exact_solution_scales(k):
    base = builtin_scenario("mini_two_task")
    scaled_types = tuple(make_task_type(t.type_id, [k * r for r in t.rewards],
                                        [k * c for c in t.costs], t.dwell)
                         for t in base.task_types)
    scaled = type(base)(base.scenario_id, scaled_types, base.instances)
    a, b = value_iteration(base, 0.8, 0.95), value_iteration(scaled, 0.8, 0.95)
    for key, (cont, leave) in a.q_type.items():
        assert b.q_type[key] == pytest.approx((k * cont, k * leave), abs=1e-8)
        assert (cont >= leave) == (b.q_type[key][0] >= b.q_type[key][1])
    for key, row in a.q_root.items():
        if not row:  # terminal
            continue
        best = max(row, key=row.get)
        assert max(b.q_root[key], key=b.q_root[key].get) == best


def test_reproducible(two_task):
    a = train(two_task, LearningConfig(episodes=50, seed=3))
    b = train(two_task, LearningConfig(episodes=50, seed=3))
    assert a.returns == b.returns
    assert all(a.type_tables[t].values == b.type_tables[t].values for t in a.type_tables)
    assert a.root.values == b.root.values


def test_values_bounded():
    scenario = builtin_scenario("mini_shared_type")
    config = LearningConfig(episodes=150, gamma_t=0.95, gamma_r=0.95)
    policy = train(scenario, config)
    env = TaskEnvironment(scenario)
    reward_sum = sum(sum(env.rewards[i]) for i in range(env.n))
    cost_sum = sum(sum(env.costs[i]) for i in range(env.n))
    bound = (reward_sum + cost_sum) / (1 - 0.95)
    assert all(r <= reward_sum + 1e-9 for r in policy.returns)
    for table in policy.type_tables.values():
        assert all(abs(v) <= bound for row in table.values for v in row)
    for row in policy.root.values.values():
        assert all(abs(v) <= bound for v in row.values())


def test_params_personalize_training():
    scenario = builtin_scenario("toy_two_task")
    params = ParamSet(0.5, 0.1, {"writing": 0.5, "browsing": 0.5})
    policy = train(scenario, LearningConfig(episodes=5), params)
    assert policy.config.gamma_t == 0.5 and policy.params == params
    with pytest.raises(ValidationError):
        train(scenario, LearningConfig(episodes=5), ParamSet(1.0, 0.1, params.s_pt))


def test_truncated_training_modes_ignored():
    # training always runs to completion, whatever the scenario's own mode
    scenario = builtin_scenario("study_six_instance")
    assert scenario.mode != Mode()
    policy = train(scenario, LearningConfig(episodes=3))
    assert len(policy.returns) == 3 and all(math.isfinite(r) for r in policy.returns)
