import pytest

from hrl_interleave.scenarios import Scenario
from hrl_interleave.task_model import TaskInstanceSpec, make_task_type


def make_scenario(*types_and_ids, scenario_id="test", **kwargs) -> Scenario:
    """Scenario with one instance per ``(instance_id, type_spec)`` pair."""
    types = {}
    instances = []
    for iid, spec in types_and_ids:
        types.setdefault(spec.type_id, spec)
        instances.append(TaskInstanceSpec(iid, spec.type_id))
    return Scenario(scenario_id, tuple(types.values()), tuple(instances), **kwargs)


@pytest.fixture
def single_task():
    return make_scenario(("A", make_task_type("chain", [1.0, 0.0, 2.0], [0.5, 1.0, 0.0])))


@pytest.fixture
def two_task():
    a = make_task_type("a", [2.0, 0.0, 1.0], [2.0, 1.0, 0.0])
    b = make_task_type("b", [6.0, 1.0], [1.0, 0.5])
    return make_scenario(("A", a), ("B", b))
