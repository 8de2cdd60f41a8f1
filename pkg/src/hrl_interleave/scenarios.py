"""Scenario definition and the builtin scenario library.

The numeric arrays below are declared constants chosen to reproduce the
qualitative task shapes (terminal reward spike for writing, constant reward
for browsing, staircase rewards with rising costs for the study tasks). They
are configuration, not measured data.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .task_model import (TaskInstanceSpec, TaskTypeSpec, ValidationError,
                         make_task_type, validate_task_type)

COMPLETION = "completion"
BUDGET = "budget"


@dataclass(frozen=True)
class Mode:
    """Episode termination rule: run to completion or stop at a time budget.

    In budget mode the budget is drawn uniformly from ``[budget_low, budget_high]``.
    """

    kind: str = COMPLETION
    budget_low: float | None = None
    budget_high: float | None = None

    def __post_init__(self) -> None:
        if self.kind == COMPLETION:
            return
        if self.kind != BUDGET:
            raise ValidationError(f"unknown mode {self.kind!r}")
        if self.budget_low is None:
            raise ValidationError("budget mode requires budget_low")
        if self.budget_high is None:
            object.__setattr__(self, "budget_high", self.budget_low)
        if not 0 < self.budget_low <= self.budget_high:
            raise ValidationError(f"invalid budget range [{self.budget_low}, {self.budget_high}]")

    @classmethod
    def budget(cls, low: float, high: float | None = None) -> "Mode":
        return cls(BUDGET, float(low), None if high is None else float(high))

    @classmethod
    def parse(cls, text: str) -> "Mode":
        """Parse ``completion`` or ``budget=B`` / ``budget=LO:HI``."""
        if text == COMPLETION:
            return cls()
        if text.startswith("budget="):
            lo, _, hi = text[len("budget="):].partition(":")
            try:
                return cls.budget(float(lo), float(hi) if hi else None)
            except ValueError as exc:
                raise ValidationError(f"bad budget in mode {text!r}") from exc
        raise ValidationError(f"mode must be 'completion' or 'budget=B', got {text!r}")

    def sample_budget(self, seed: int | None) -> float | None:
        if self.kind == COMPLETION:
            return None
        if self.budget_low == self.budget_high:
            return self.budget_low
        return random.Random(seed).uniform(self.budget_low, self.budget_high)

    def to_dict(self) -> dict:
        if self.kind == COMPLETION:
            return {"kind": COMPLETION}
        return {"kind": BUDGET, "budget_low": self.budget_low, "budget_high": self.budget_high}

    @classmethod
    def from_dict(cls, data: dict) -> "Mode":
        return cls(data["kind"], data.get("budget_low"), data.get("budget_high"))


@dataclass(frozen=True)
class Scenario:
    """A task environment: task types, the instances drawn from them, and episode rules.

    ``forced_first`` names an instance the first selection of every episode must
    take (the toy simulations start in writing).
    """

    scenario_id: str
    task_types: tuple[TaskTypeSpec, ...]
    instances: tuple[TaskInstanceSpec, ...]
    mode: Mode = field(default_factory=Mode)
    forced_first: str | None = None
    description: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_types", tuple(self.task_types))
        object.__setattr__(self, "instances", tuple(self.instances))
        validate_scenario(self)

    def type_of(self, instance_id: str) -> TaskTypeSpec:
        return self.types_by_id[self.instance_by_id[instance_id].type_id]

    @property
    def types_by_id(self) -> dict[str, TaskTypeSpec]:
        return {t.type_id: t for t in self.task_types}

    @property
    def instance_by_id(self) -> dict[str, TaskInstanceSpec]:
        return {i.instance_id: i for i in self.instances}

    @property
    def instance_ids(self) -> tuple[str, ...]:
        return tuple(i.instance_id for i in self.instances)

    @property
    def type_ids(self) -> tuple[str, ...]:
        return tuple(t.type_id for t in self.task_types)


def validate_scenario(scenario: Scenario) -> Scenario:
    if not scenario.instances:
        raise ValidationError(f"scenario {scenario.scenario_id!r} has no task instances")
    type_ids = [t.type_id for t in scenario.task_types]
    if len(set(type_ids)) != len(type_ids):
        raise ValidationError(f"duplicate task type id in scenario {scenario.scenario_id!r}")
    for t in scenario.task_types:
        validate_task_type(t)
    types = dict(zip(type_ids, scenario.task_types))
    seen = set()
    for inst in scenario.instances:
        if inst.instance_id in seen:
            raise ValidationError(f"duplicate instance id {inst.instance_id!r}")
        seen.add(inst.instance_id)
        if inst.type_id not in types:
            raise ValidationError(
                f"instance {inst.instance_id!r} references undeclared task type {inst.type_id!r}")
        if not 0 <= inst.start_state < types[inst.type_id].length:
            raise ValidationError(
                f"instance {inst.instance_id!r}: start_state {inst.start_state} out of range")
    if scenario.forced_first is not None and scenario.forced_first not in seen:
        raise ValidationError(f"forced_first {scenario.forced_first!r} is not an instance")
    return scenario


# --- builtin library -------------------------------------------------------

# Intermediate type-level discount at which the toy agent is expected to
# switch out of writing, and only at chapter boundaries.
TOY_BOUNDARY_GAMMA_T = 0.5
# Discount of the simulated user in the flat-vs-hierarchical comparison.
COMPARISON_GAMMA_T = 0.9


def _writing(length_per_chapter: int = 4, chapters: int = 3, final_reward: float = 30.0,
             type_id: str = "writing") -> TaskTypeSpec:
    chapter_costs = [0.0, 2.0] + [3.0] * (length_per_chapter - 2)
    costs = chapter_costs * chapters
    rewards = [0.0] * (len(costs) - 1) + [final_reward]
    return make_task_type(type_id, rewards, costs, 1.0, "long task, reward on completion")


def _browsing(length: int = 12, type_id: str = "browsing") -> TaskTypeSpec:
    return make_task_type(type_id, [1.0] * length, [0.2] * length, 1.0, "constant small reward")


def _toy_two_task() -> Scenario:
    return Scenario(
        "toy_two_task",
        (_writing(), _browsing()),
        (TaskInstanceSpec("W", "writing"), TaskInstanceSpec("B", "browsing")),
        forced_first="W",
        description="Writing pays only on completion and is costly to leave mid-chapter; "
                    "browsing pays a small constant reward.",
    )


def _toy_midchapter() -> Scenario:
    return Scenario(
        "toy_midchapter",
        (_writing(), _browsing()),
        (TaskInstanceSpec("W", "writing", start_state=2), TaskInstanceSpec("B", "browsing")),
        forced_first="W",
        description="Toy problem entered in the middle of the first writing chapter.",
    )


def _mini_two_task() -> Scenario:
    writing = make_task_type("writing", [0, 0, 0, 0, 0, 10], [0, 2, 2, 0, 2, 2], 1.0,
                             "short writing task")
    browsing = make_task_type("browsing", [1, 1, 1, 1], [0.2] * 4, 1.0, "short browsing task")
    return Scenario("mini_two_task", (writing, browsing),
                    (TaskInstanceSpec("B", "browsing"), TaskInstanceSpec("W", "writing")),
                    description="Small two-task problem enumerable by value iteration.")


def _mini_shared_type() -> Scenario:
    report = make_task_type("report", [0, 0, 1, 0, 4], [0, 1, 1, 0, 1], 1.0, "report section")
    email = make_task_type("email", [1, 1, 1], [0.1] * 3, 1.0, "email replies")
    return Scenario("mini_shared_type", (report, email),
                    (TaskInstanceSpec("A1", "report"), TaskInstanceSpec("A2", "report", 2),
                     TaskInstanceSpec("E", "email")),
                    description="Two instances share one type; enumerable by value iteration.")


def _study_types() -> tuple[TaskTypeSpec, ...]:
    # Leaving costs are large relative to per-state rewards, so where a participant
    # switches to depends on how they weigh costs, not just on the next reward.
    reading_rewards = [0.6] * 10
    reading_rewards[4] = 3.0  # passage answering the comprehension query
    reading_rewards[9] = 3.0
    reading = make_task_type("reading", reading_rewards, [2.4] * 10, 1.0,
                             "text passages, comprehension questions at the end")
    typing = make_task_type("typing", [1.0] * 6, [1.2] * 6, 1.0, "one phrase per state")
    # two states per equation; costs grow with the number of terms
    math = make_task_type("math", [0.4, 1.2, 0.4, 1.8, 0.4, 2.4, 0.4, 3.0],
                          [0.8, 0.8, 1.6, 1.6, 2.4, 2.4, 3.2, 3.2], 1.5,
                          "equations with a growing number of terms")
    visual = make_task_type("visual_matching", [1.6, 1.4, 1.2, 1.0, 0.8, 0.6],
                            [0.8, 0.8, 2.0, 2.0, 3.2, 3.2], 1.0,
                            "image lists with a shrinking share of targets")
    return reading, typing, math, visual


def _comparison_study_types() -> tuple[TaskTypeSpec, ...]:
    """Study-like task shapes with cheap leaving, used by the comparison scenario."""
    reading_rewards = [0.5] * 10
    reading_rewards[5] = 3.0
    reading_rewards[9] = 3.0
    reading = make_task_type("reading", reading_rewards, [0.8] * 10, 1.0,
                             "text passages, comprehension questions at the end")
    typing = make_task_type("typing", [1.5] * 6, [0.3] * 6, 1.0, "one phrase per state")
    math_costs = [0.2, 0.2, 0.4, 0.4, 0.6, 0.6, 0.8, 0.8]
    math = make_task_type("math", [0, 1, 0, 2, 0, 3, 0, 4], math_costs, 1.5,
                          "equations with a growing number of terms")
    visual = make_task_type("visual_matching", [3.0, 2.5, 2.0, 1.5, 1.2, 1.0],
                            [0.3, 0.3, 0.5, 0.5, 0.7, 0.7], 1.0,
                            "image lists with a shrinking share of targets")
    return reading, typing, math, visual


def _study_six_instance() -> Scenario:
    return Scenario(
        "study_six_instance",
        _study_types(),
        (TaskInstanceSpec("R1", "reading"), TaskInstanceSpec("R2", "reading"),
         TaskInstanceSpec("T1", "typing"), TaskInstanceSpec("M1", "math"),
         TaskInstanceSpec("M2", "math"), TaskInstanceSpec("V1", "visual_matching")),
        mode=Mode.budget(25.0, 40.0),
        description="Six instances of the reading, typing, math and visual matching tasks "
                    "under a random time budget.",
    )


# Each comparison task state is split into this many finer steps. Long tasks
# are where visiting the root only at decision epochs pays off.
COMPARISON_STRETCH = 3


def _stretch(spec: TaskTypeSpec, k: int, type_id: str | None = None) -> TaskTypeSpec:
    """Repeat every state of ``spec`` ``k`` times."""
    rewards = [r for r in spec.rewards for _ in range(k)]
    costs = [c for c in spec.costs for _ in range(k)]
    return make_task_type(type_id or spec.type_id, rewards, costs, spec.dwell, spec.label)


def _comparison_ten_instance() -> Scenario:
    k = COMPARISON_STRETCH
    report = _writing(length_per_chapter=4 * k, type_id="report")
    email = _browsing(6 * k, type_id="email")
    types = (report, email) + tuple(_stretch(t, k) for t in _comparison_study_types())
    instances = (
        TaskInstanceSpec("P1", "report"), TaskInstanceSpec("P2", "report"),
        TaskInstanceSpec("E1", "email"), TaskInstanceSpec("E2", "email"),
        TaskInstanceSpec("R1", "reading"), TaskInstanceSpec("R2", "reading"),
        TaskInstanceSpec("M1", "math"), TaskInstanceSpec("M2", "math"),
        TaskInstanceSpec("T1", "typing"), TaskInstanceSpec("V1", "visual_matching"),
    )
    return Scenario("comparison_ten_instance", types, instances,
                    description="Ten long instances over six task types with mixed reward shapes.")


_BUILTINS = {
    "toy_two_task": _toy_two_task,
    "toy_midchapter": _toy_midchapter,
    "mini_two_task": _mini_two_task,
    "mini_shared_type": _mini_shared_type,
    "study_six_instance": _study_six_instance,
    "comparison_ten_instance": _comparison_ten_instance,
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_scenario(name: str) -> Scenario:
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValidationError(
            f"unknown builtin scenario {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None
    return factory()
