"""Task types, task instances and individual switch-cost parameters.

A task type is a discrete chain of ``length`` states carrying a reward and a
switch cost per state. Instances point at a type and hold their own progress
in the environment. All reward/cost lookups go through this module so that
personalized costs can be substituted in one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence


class ValidationError(ValueError):
    """A task, scenario, trace or parameter set violates its invariants."""


@dataclass(frozen=True)
class TaskTypeSpec:
    type_id: str
    length: int
    rewards: tuple[float, ...]
    costs: tuple[float, ...]
    dwell: float = 1.0
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))


@dataclass(frozen=True)
class TaskInstanceSpec:
    instance_id: str
    type_id: str
    start_state: int = 0


# Open-interval bounds of the individual parameters.
GAMMA_T_BOUNDS = (0.0, 1.0)
C_P_BOUNDS = (0.0, 0.3)
S_PT_BOUNDS = (0.0, 1.0)


@dataclass(frozen=True)
class ParamSet:
    """Individual parameters: type-level discount, general and per-type switch cost."""

    gamma_t: float
    c_p: float
    s_pt: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "s_pt", dict(sorted(self.s_pt.items())))

    def validate(self) -> "ParamSet":
        _check_open(self.gamma_t, GAMMA_T_BOUNDS, "gamma_t")
        _check_open(self.c_p, C_P_BOUNDS, "c_p")
        for type_id, scale in self.s_pt.items():
            _check_open(scale, S_PT_BOUNDS, f"s_pt[{type_id}]")
        return self

    def to_dict(self) -> dict:
        return {"gamma_t": self.gamma_t, "c_p": self.c_p, "s_pt": dict(self.s_pt)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ParamSet":
        return cls(float(data["gamma_t"]), float(data["c_p"]),
                   {k: float(v) for k, v in data["s_pt"].items()})


def _check_open(value: float, bounds: tuple[float, float], name: str) -> None:
    lo, hi = bounds
    if not (lo < value < hi):
        raise ValidationError(f"{name}={value} outside open interval ({lo}, {hi})")


def validate_task_type(spec: TaskTypeSpec) -> TaskTypeSpec:
    """Return ``spec`` unchanged, or raise ValidationError naming the first violation."""
    if not isinstance(spec.length, int) or spec.length <= 0:
        raise ValidationError(f"task type {spec.type_id!r}: length must be a positive integer, got {spec.length}")
    for name, values in (("rewards", spec.rewards), ("costs", spec.costs)):
        if len(values) != spec.length:
            raise ValidationError(
                f"task type {spec.type_id!r}: {name} length {len(values)} ≠ {spec.length}")
        for s, v in enumerate(values):
            if not math.isfinite(v):
                raise ValidationError(f"task type {spec.type_id!r}: non-finite {name[:-1]} at state {s}")
            if v < 0:
                raise ValidationError(f"task type {spec.type_id!r}: negative {name[:-1]} at state {s}")
    if not (math.isfinite(spec.dwell) and spec.dwell > 0):
        raise ValidationError(f"task type {spec.type_id!r}: dwell must be positive, got {spec.dwell}")
    return spec


def _check_state(spec: TaskTypeSpec, s: int) -> None:
    if not 0 <= s < spec.length:
        raise IndexError(f"state {s} out of range for task type {spec.type_id!r} (length {spec.length})")


def reward_at(spec: TaskTypeSpec, s: int) -> float:
    _check_state(spec, s)
    return spec.rewards[s]


def cost_at(spec: TaskTypeSpec, s: int) -> float:
    _check_state(spec, s)
    return spec.costs[s]


def personalized_cost(params: ParamSet, spec: TaskTypeSpec, s: int) -> float:
    """Perceived switch cost ``c_p + s_pt[type] * c_T(s)``."""
    _check_state(spec, s)
    if spec.type_id not in params.s_pt:
        raise KeyError(f"no per-type cost scale for task type {spec.type_id!r}")
    return params.c_p + params.s_pt[spec.type_id] * spec.costs[s]


def is_subtask_boundary(spec: TaskTypeSpec, s: int) -> bool:
    """Zero-cost state or strict local minimum of the cost array.

    Reporting helper only; agents never consult it.
    """
    _check_state(spec, s)
    costs = spec.costs
    if costs[s] == 0:
        return True
    left = s == 0 or costs[s] < costs[s - 1]
    right = s == spec.length - 1 or costs[s] < costs[s + 1]
    return left and right


def cost_table(spec: TaskTypeSpec, params: ParamSet | None = None) -> tuple[float, ...]:
    """All per-state costs of a type, personalized when ``params`` is given."""
    if params is None:
        return spec.costs
    return tuple(personalized_cost(params, spec, s) for s in range(spec.length))


def make_task_type(type_id: str, rewards: Sequence[float], costs: Sequence[float],
                   dwell: float = 1.0, label: str = "") -> TaskTypeSpec:
    return validate_task_type(TaskTypeSpec(type_id, len(rewards), tuple(rewards), tuple(costs), dwell, label))
