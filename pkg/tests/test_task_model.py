import itertools
import math

import pytest
from hypothesis import given, strategies as st

from hrl_interleave.scenarios import BUILTIN_NAMES, builtin_scenario
from hrl_interleave.task_model import (ParamSet, TaskTypeSpec, ValidationError, cost_at,
                                       is_subtask_boundary, make_task_type, personalized_cost,
                                       reward_at, validate_task_type)


def spec(rewards, costs, dwell=1.0, length=None):
    return TaskTypeSpec("t", len(rewards) if length is None else length, rewards, costs, dwell)


class TestValidateTaskType:
    def test_valid_spec(self):
        s = spec([0, 0, 1], [0, 1, 0])
        assert validate_task_type(s) is s

    def test_negative_reward(self):
        with pytest.raises(ValidationError, match="negative reward at state 1"):
            validate_task_type(spec([1, -2, 0], [0, 0, 0]))

    def test_cost_length_mismatch(self):
        with pytest.raises(ValidationError, match="costs length 3 ≠ 2"):
            validate_task_type(spec([0, 0], [0, 1, 2]))

    @pytest.mark.parametrize("bad", [math.nan, math.inf])
    def test_non_finite(self, bad):
        with pytest.raises(ValidationError, match="non-finite"):
            validate_task_type(spec([0, bad], [0, 0]))

    @pytest.mark.parametrize("dwell", [0.0, -1.0, math.inf])
    def test_dwell_positive(self, dwell):
        with pytest.raises(ValidationError, match="dwell"):
            validate_task_type(spec([0], [0], dwell))

    def test_zero_length(self):
        with pytest.raises(ValidationError, match="length"):
            validate_task_type(spec([], []))

    def test_exhaustive_small_cases(self):
        # accepted iff every invariant holds, over a small grid of candidate specs
        values = (-1.0, 0.0, 2.0)
        for length in (1, 2):
            for n_r, n_c in itertools.product((1, 2), repeat=2):
                for rewards in itertools.product(values, repeat=n_r):
                    for costs in itertools.product(values, repeat=n_c):
                        for dwell in (0.0, 1.5):
                            ok = (n_r == length and n_c == length and min(rewards) >= 0
                                  and min(costs) >= 0 and dwell > 0)
                            s = TaskTypeSpec("t", length, rewards, costs, dwell)
                            if ok:
                                validate_task_type(s)
                            else:
                                with pytest.raises(ValidationError):
                                    validate_task_type(s)


class TestLookups:
    def test_browsing_reward(self):
        browsing = builtin_scenario("toy_two_task").types_by_id["browsing"]
        assert reward_at(browsing, 4) == 1.0

    def test_writing_reward_only_at_end(self):
        writing = builtin_scenario("toy_two_task").types_by_id["writing"]
        assert reward_at(writing, 0) == 0.0
        assert reward_at(writing, writing.length - 1) > 0

    def test_writing_costs(self):
        writing = builtin_scenario("toy_two_task").types_by_id["writing"]
        boundaries = [s for s in range(writing.length) if is_subtask_boundary(writing, s)]
        assert len(boundaries) == 3
        assert all(cost_at(writing, s) == 0 for s in boundaries)
        assert all(cost_at(writing, s) > 0 for s in range(writing.length) if s not in boundaries)

    @pytest.mark.parametrize("fn", [reward_at, cost_at])
    @pytest.mark.parametrize("s", [-1, 3])
    def test_out_of_range(self, fn, s):
        with pytest.raises(IndexError):
            fn(spec([0, 0, 1], [0, 1, 0]), s)


class TestPersonalizedCost:
    def test_formula(self):
        s = make_task_type("math", [0.0], [0.4])
        assert personalized_cost(ParamSet(0.5, 0.1, {"math": 0.5}), s, 0) == pytest.approx(0.3)

    def test_zero_cost_isolates_c_p(self):
        s = make_task_type("math", [0.0], [0.0])
        assert personalized_cost(ParamSet(0.5, 0.17, {"math": 0.9}), s, 0) == 0.17

    def test_missing_type_scale(self):
        s = make_task_type("math", [0.0], [0.4])
        with pytest.raises(KeyError, match="math"):
            personalized_cost(ParamSet(0.5, 0.1, {"reading": 0.5}), s, 0)

    @given(c_p=st.floats(0.001, 0.299), s_pt=st.floats(0.001, 0.999),
           c1=st.floats(0, 10), c2=st.floats(0, 10))
    def test_affine_in_cost(self, c_p, s_pt, c1, c2):
        params = ParamSet(0.5, c_p, {"t": s_pt})
        s = make_task_type("t", [0.0, 0.0], [c1, c2])
        y1, y2 = personalized_cost(params, s, 0), personalized_cost(params, s, 1)
        assert y1 == pytest.approx(c_p + s_pt * c1)
        if abs(c2 - c1) > 1e-3:
            assert (y2 - y1) / (c2 - c1) == pytest.approx(s_pt, rel=1e-6, abs=1e-9)

    @given(c_p=st.floats(0.001, 0.29), s_pt=st.floats(0.001, 0.98), c=st.floats(0, 10),
           dc_p=st.floats(0, 0.009), ds=st.floats(0, 0.019), dc=st.floats(0, 1))
    def test_monotone(self, c_p, s_pt, c, dc_p, ds, dc):
        t = make_task_type("t", [0.0, 0.0], [c, c + dc])
        base = personalized_cost(ParamSet(0.5, c_p, {"t": s_pt}), t, 0)
        assert personalized_cost(ParamSet(0.5, c_p + dc_p, {"t": s_pt}), t, 0) >= base
        assert personalized_cost(ParamSet(0.5, c_p, {"t": s_pt + ds}), t, 0) >= base
        assert personalized_cost(ParamSet(0.5, c_p, {"t": s_pt}), t, 1) >= base


class TestSubtaskBoundary:
    def test_local_minimum(self):
        assert is_subtask_boundary(spec([0] * 5, [0, 2, 2, 0, 2]), 3)

    def test_flat_costs(self):
        assert not is_subtask_boundary(spec([0] * 3, [1, 1, 1]), 1)

    def test_zero_cost_first_state(self):
        assert is_subtask_boundary(spec([0] * 3, [0, 1, 1]), 0)

    def test_strict_minimum_nonzero(self):
        assert is_subtask_boundary(spec([0] * 3, [2, 1, 2]), 1)


class TestParamSet:
    @pytest.mark.parametrize("kwargs", [
        dict(gamma_t=0.0, c_p=0.1), dict(gamma_t=1.0, c_p=0.1), dict(gamma_t=0.5, c_p=0.3),
        dict(gamma_t=0.5, c_p=0.0), dict(gamma_t=0.5, c_p=0.1, s_pt={"t": 1.0})])
    def test_open_bounds(self, kwargs):
        with pytest.raises(ValidationError):
            ParamSet(**kwargs).validate()

    def test_round_trip(self):
        p = ParamSet(0.4, 0.2, {"b": 0.3, "a": 0.6})
        assert ParamSet.from_dict(p.to_dict()) == p
        assert list(p.s_pt) == ["a", "b"]


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_types_valid(name):
    for t in builtin_scenario(name).task_types:
        validate_task_type(t)
