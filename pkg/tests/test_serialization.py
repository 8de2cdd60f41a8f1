import json

import pytest

from hrl_interleave.baselines import RandomPolicy
from hrl_interleave.environment import TaskEnvironment
from hrl_interleave.flat_agent import train_flat
from hrl_interleave.hrl_agent import LearningConfig, greedy_action, train
from hrl_interleave.scenarios import BUILTIN_NAMES, Mode, builtin_scenario
from hrl_interleave.serialization import (curve_csv, load_policy, load_scenario, parse_trace,
                                          read_trace, save_policy, save_scenario,
                                          scenario_canonical, scenario_from_dict,
                                          scenario_to_dict, trace_csv, trace_lines, write_trace)
from hrl_interleave.task_model import ParamSet, ValidationError


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_scenario_round_trip(name, tmp_path):
    scenario = builtin_scenario(name)
    path = tmp_path / "s.json"
    save_scenario(scenario, path)
    loaded = load_scenario(path)
    assert loaded == scenario
    assert scenario_canonical(loaded) == path.read_text()
    assert scenario_canonical(scenario) == scenario_canonical(builtin_scenario(name))


class TestScenarioErrors:
    def base(self):
        return scenario_to_dict(builtin_scenario("toy_two_task"))

    def test_missing_type_reference(self):
        data = self.base()
        data["instances"][1]["type_id"] = "cooking"
        with pytest.raises(ValidationError, match="undeclared task type 'cooking'"):
            scenario_from_dict(data)

    def test_duplicate_instance(self):
        data = self.base()
        data["instances"][1]["instance_id"] = "W"
        with pytest.raises(ValidationError, match="duplicate instance id 'W'"):
            scenario_from_dict(data)

    def test_missing_field(self):
        data = self.base()
        del data["task_types"][0]["rewards"]
        with pytest.raises(ValidationError, match=r"task_types\[0\].*'rewards'"):
            scenario_from_dict(data)

    def test_version(self):
        data = self.base()
        data["format_version"] = 99
        with pytest.raises(ValidationError, match="format_version"):
            scenario_from_dict(data)

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ValidationError):
            load_scenario(path)


@pytest.fixture
def study_trace():
    env = TaskEnvironment(builtin_scenario("study_six_instance"))
    return env, env.rollout(RandomPolicy(4), env.reset(Mode.budget(12), seed=4), seed=4)


class TestTraces:
    def test_round_trip(self, tmp_path, study_trace):
        env, trace = study_trace
        path = tmp_path / "t.jsonl"
        write_trace(trace, path, env.ids)
        loaded = read_trace(path)
        assert loaded == trace
        assert trace_lines(loaded, env.ids) == path.read_text()

    def test_truncated_trace_round_trip(self, tmp_path, study_trace):
        env, trace = study_trace
        assert trace.records[-1].is_truncation
        assert parse_trace(trace_lines(trace, env.ids)).records[-1].is_truncation

    def test_tampered_total(self, study_trace):
        env, trace = study_trace
        lines = trace_lines(trace, env.ids).splitlines()
        header = json.loads(lines[0])
        header["total_reward"] += 1.0
        lines[0] = json.dumps(header)
        with pytest.raises(ValidationError, match="total_reward"):
            parse_trace("\n".join(lines))

    def test_broken_chain(self, study_trace):
        env, trace = study_trace
        lines = trace_lines(trace, env.ids).splitlines()
        row = json.loads(lines[3])
        row["pre"]["clock"] += 1.0
        lines[3] = json.dumps(row)
        with pytest.raises(ValidationError, match="chain broken"):
            parse_trace("\n".join(lines))

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        trace = read_trace(path)
        assert trace.records == () and trace.total_reward == 0.0

    def test_csv(self, study_trace):
        env, trace = study_trace
        text = trace_csv(trace, env.ids)
        lines = text.splitlines()
        assert lines[0] == "step,clock,level,active_instance,state,action,reward,duration,exited"
        assert len(lines) == len(trace.records) + 1


@pytest.mark.parametrize("trainer", [train, train_flat])
def test_policy_round_trip(trainer, tmp_path):
    scenario = builtin_scenario("mini_shared_type")
    params = ParamSet(0.7, 0.1, {"report": 0.4, "email": 0.6})
    policy = trainer(scenario, LearningConfig(episodes=40, seed=2), params)
    path = tmp_path / "p.json"
    save_policy(policy, path)
    loaded = load_policy(path, scenario)
    assert loaded.params == params and loaded.returns == policy.returns
    env = TaskEnvironment(scenario, params)
    a = env.rollout(policy, env.reset())
    b = env.rollout(loaded, env.reset())
    assert a.records == b.records
    save_policy(loaded, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_policy_scenario_mismatch(tmp_path):
    policy = train(builtin_scenario("mini_two_task"), LearningConfig(episodes=5))
    save_policy(policy, tmp_path / "p.json")
    with pytest.raises(ValidationError, match="fingerprint"):
        load_policy(tmp_path / "p.json", builtin_scenario("toy_two_task"))


def test_hrl_policy_values_preserved(tmp_path):
    scenario = builtin_scenario("toy_two_task")
    policy = train(scenario, LearningConfig(episodes=30))
    save_policy(policy, tmp_path / "p.json")
    loaded = load_policy(tmp_path / "p.json", scenario)
    env = TaskEnvironment(scenario)
    assert loaded.root.values == policy.root.values
    for tid, table in policy.type_tables.items():
        assert loaded.type_tables[tid].values == table.values
        assert loaded.type_tables[tid].visited == table.visited
    assert greedy_action(loaded, env.reset(), env) == greedy_action(policy, env.reset(), env)


def test_curve_csv():
    text = curve_csv({"episode": [0, 1], "mean": [0.5, 1.25]})
    assert text == "episode,mean\n0,0.5\n1,1.25\n"
