import pytest

from hrl_interleave.scenarios import (BUDGET, COMPLETION, Mode, builtin_scenario)
from hrl_interleave.task_model import ValidationError, is_subtask_boundary


def test_toy_two_task():
    s = builtin_scenario("toy_two_task")
    assert len(s.instances) == 2 and len(s.task_types) == 2
    writing, browsing = s.types_by_id["writing"], s.types_by_id["browsing"]
    assert writing.length == browsing.length == 12
    assert writing.rewards[-1] > 0 and not any(writing.rewards[:-1])
    assert len(set(browsing.rewards)) == 1 and len(set(browsing.costs)) == 1
    assert max(browsing.costs) < max(writing.costs)
    assert sum(is_subtask_boundary(writing, k) for k in range(12)) == 3


def test_comparison_ten_instance():
    s = builtin_scenario("comparison_ten_instance")
    assert len(s.instances) == 10 and len(s.task_types) == 6


def test_study_six_instance():
    s = builtin_scenario("study_six_instance")
    assert len(s.instances) == 6
    assert set(s.type_ids) == {"reading", "typing", "math", "visual_matching"}
    math_costs = s.types_by_id["math"].costs
    assert all(b >= a for a, b in zip(math_costs, math_costs[1:]))
    visual = s.types_by_id["visual_matching"].rewards
    assert all(b <= a for a, b in zip(visual, visual[1:]))
    assert s.mode.kind == BUDGET


def test_unknown():
    with pytest.raises(ValidationError, match="unknown builtin"):
        builtin_scenario("nope")


class TestMode:
    def test_parse(self):
        assert Mode.parse("completion").kind == COMPLETION
        assert Mode.parse("budget=20") == Mode.budget(20)
        assert Mode.parse("budget=10:30") == Mode.budget(10, 30)

    @pytest.mark.parametrize("text", ["budget=", "budget=x", "budget=-3", "forever", "budget=5:2"])
    def test_invalid(self, text):
        with pytest.raises(ValidationError):
            Mode.parse(text)

    def test_round_trip(self):
        m = Mode.budget(5, 9)
        assert Mode.from_dict(m.to_dict()) == m
