"""Two-level semi-Markov task-interleaving environment.

Inside a task the agent either continues (collects the state's reward, spends
the type's dwell time and advances one state) or leaves (pays the state's
switch cost). With no task active, the root selects an available instance
and pays that instance's resumption cost, unless it re-selects the instance
it just left.

Instances are addressed by their position in ``scenario.instances``;
identifiers only appear at the serialization boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Protocol, Sequence

from .scenarios import Mode, Scenario
from .task_model import ParamSet, ValidationError, cost_table

_BUDGET_EPS = 1e-9


class InvalidActionError(ValueError):
    """An action was requested that the current state does not allow."""


class RolloutError(RuntimeError):
    """A policy failed to make progress during a rollout."""


class Primitive(str, Enum):
    CONTINUE = "continue"
    LEAVE = "leave"


CONTINUE = Primitive.CONTINUE
LEAVE = Primitive.LEAVE
ROOT = "root"
TYPE = "type"


class EnvState(NamedTuple):
    """Root-level snapshot.

    ``progress[i]`` equals the type length once instance ``i`` is completed.
    ``previous`` is the instance that was active most recently.
    """

    progress: tuple[int, ...]
    active: int | None = None
    previous: int | None = None
    clock: float = 0.0
    budget: float | None = None
    truncated: bool = False


class TransitionRecord(NamedTuple):
    pre: EnvState
    level: str
    action: Primitive | int
    reward: float
    duration: float
    post: EnvState
    exited: bool

    @property
    def is_truncation(self) -> bool:
        return self.post.truncated and not self.pre.truncated


@dataclass(frozen=True)
class Trace:
    records: tuple[TransitionRecord, ...]
    scenario_id: str
    seed: int | None
    total_reward: float
    initial: EnvState

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    def validate(self) -> "Trace":
        prev = self.initial
        for k, rec in enumerate(self.records):
            if rec.pre != prev:
                raise ValidationError(f"trace chain broken at record {k}: pre differs from previous post")
            prev = rec.post
        total = math.fsum(r.reward for r in self.records)
        if not math.isclose(total, self.total_reward, rel_tol=1e-9, abs_tol=1e-9):
            raise ValidationError(f"total_reward {self.total_reward} ≠ sum of record rewards {total}")
        return self

    @property
    def final(self) -> EnvState:
        return self.records[-1].post if self.records else self.initial


class Policy(Protocol):
    def root_action(self, env: "TaskEnvironment", state: EnvState) -> int: ...

    def type_action(self, env: "TaskEnvironment", state: EnvState) -> Primitive: ...


def switch_candidates(env: "TaskEnvironment", s: EnvState) -> tuple[int, ...]:
    """Unfinished instances other than the one just left, in tie-break order."""
    return tuple(j for j in env.available_root_actions(s) if j != s.previous)


def switch_choice(policy: Policy, env: "TaskEnvironment", s: EnvState) -> int:
    """The policy's pick at root state ``s`` given that it switches away from ``s.previous``.

    Policies may provide ``switch_action``; otherwise their plain root choice is used.
    """
    fn = getattr(policy, "switch_action", None)
    return fn(env, s) if fn is not None else policy.root_action(env, s)


class TaskEnvironment:
    """Pure step functions over :class:`EnvState` for one scenario.

    With ``params`` every switch cost is replaced by the personalized cost
    ``c_p + s_pt * c_T(s)``; rewards are unaffected.
    """

    def __init__(self, scenario: Scenario, params: ParamSet | None = None,
                 free_first_selection: bool = False) -> None:
        self.scenario = scenario
        self.params = params
        self.free_first_selection = free_first_selection
        types = scenario.types_by_id
        type_pos = {t.type_id: k for k, t in enumerate(scenario.task_types)}
        insts = scenario.instances
        self.n = len(insts)
        self.ids = tuple(i.instance_id for i in insts)
        self.index = {iid: k for k, iid in enumerate(self.ids)}
        self.type_index = tuple(type_pos[i.type_id] for i in insts)
        self.types = tuple(types[i.type_id] for i in insts)
        self.lengths = tuple(t.length for t in self.types)
        self.rewards = tuple(t.rewards for t in self.types)
        self.true_costs = tuple(t.costs for t in self.types)
        per_type_costs = {t.type_id: cost_table(t, params) for t in scenario.task_types}
        self.costs = tuple(per_type_costs[t.type_id] for t in self.types)
        self.dwell = tuple(t.dwell for t in self.types)
        self.start = tuple(i.start_state for i in insts)
        # tie-break order: lowest instance id first
        self.order = tuple(sorted(range(self.n), key=lambda k: self.ids[k]))
        self.forced_first = None if scenario.forced_first is None else self.index[scenario.forced_first]

    # --- state queries -----------------------------------------------------

    def reset(self, mode: Mode | None = None, seed: int | None = None) -> EnvState:
        mode = self.scenario.mode if mode is None else mode
        return EnvState(self.start, budget=mode.sample_budget(seed))

    def is_completed(self, s: EnvState, i: int) -> bool:
        return s.progress[i] >= self.lengths[i]

    def completed(self, s: EnvState) -> frozenset[int]:
        return frozenset(i for i in range(self.n) if s.progress[i] >= self.lengths[i])

    def available_root_actions(self, s: EnvState) -> tuple[int, ...]:
        """Instances not yet completed, in tie-break order."""
        p, lengths = s.progress, self.lengths
        return tuple(i for i in self.order if p[i] < lengths[i])

    def is_terminal(self, s: EnvState) -> bool:
        if s.truncated:
            return True
        if s.budget is not None and s.clock >= s.budget - _BUDGET_EPS:
            return True
        p, lengths = s.progress, self.lengths
        return all(p[i] >= lengths[i] for i in range(self.n))

    def switch_penalty(self, s: EnvState, i: int) -> float:
        """Resumption cost paid when the root selects ``i`` in state ``s``."""
        if i == s.previous:
            return 0.0
        if s.previous is None and self.free_first_selection:
            return 0.0
        return self.costs[i][s.progress[i]]

    # --- steps ---------------------------------------------------------------

    def step_type(self, s: EnvState, a: Primitive) -> TransitionRecord:
        i = s.active
        if i is None:
            raise InvalidActionError("type-level step without an active instance")
        state = s.progress[i]
        if state >= self.lengths[i]:
            raise InvalidActionError(f"instance {self.ids[i]!r} is already completed")
        if a is LEAVE or a == LEAVE:
            post = EnvState(s.progress, None, i, s.clock, s.budget, False)
            return TransitionRecord(s, TYPE, LEAVE, -self.costs[i][state], 0.0, post, True)
        if a is not CONTINUE and a != CONTINUE:
            raise InvalidActionError(f"unknown type-level action {a!r}")
        dwell = self.dwell[i]
        if s.budget is not None and s.clock + dwell > s.budget + _BUDGET_EPS:
            post = EnvState(s.progress, None, i, s.clock, s.budget, True)
            return TransitionRecord(s, TYPE, CONTINUE, 0.0, 0.0, post, True)
        progress = s.progress[:i] + (state + 1,) + s.progress[i + 1:]
        done = state + 1 >= self.lengths[i]
        post = EnvState(progress, None if done else i, i, s.clock + dwell, s.budget, False)
        return TransitionRecord(s, TYPE, CONTINUE, self.rewards[i][state], dwell, post, done)

    def step_root(self, s: EnvState, chosen: int) -> TransitionRecord:
        if s.active is not None:
            raise InvalidActionError("root selection while an instance is active")
        if not 0 <= chosen < self.n:
            raise InvalidActionError(f"unknown instance index {chosen}")
        if s.progress[chosen] >= self.lengths[chosen]:
            raise InvalidActionError(f"instance {self.ids[chosen]!r} is completed")
        post = EnvState(s.progress, chosen, s.previous, s.clock, s.budget, False)
        return TransitionRecord(s, ROOT, chosen, -self.switch_penalty(s, chosen), 0.0, post, False)

    # --- episodes ------------------------------------------------------------

    def rollout(self, policy: Policy, s0: EnvState, seed: int | None = None,
                first_selection: int | None = None, honor_forced_first: bool = True) -> Trace:
        """Alternate root selections and type-level steps until the episode ends.

        The scenario's forced first instance (if any) replaces the policy's
        first root choice unless ``honor_forced_first`` is false.
        """
        reset = getattr(policy, "reset", None)
        if reset is not None:
            reset(seed)
        if first_selection is None and honor_forced_first and s0.previous is None:
            first_selection = self.forced_first
        records: list[TransitionRecord] = []
        s = s0
        idle = 0
        # generous: random policies make long but finite runs of zero-duration switches
        idle_limit = 100 * (self.n + 1)
        while not self.is_terminal(s):
            k = len(records)
            if s.active is None:
                if first_selection is not None and k == 0:
                    i = first_selection
                else:
                    i = policy.root_action(self, s)
                if i not in self.available_root_actions(s):
                    raise InvalidActionError(f"step {k}: policy selected unavailable instance {i}")
                rec = self.step_root(s, i)
            else:
                rec = self.step_type(s, policy.type_action(self, s))
            records.append(rec)
            idle = 0 if rec.duration > 0 else idle + 1
            if idle > idle_limit:
                raise RolloutError(f"step {k}: policy keeps switching without progress")
            s = rec.post
        total = math.fsum(r.reward for r in records)
        return Trace(tuple(records), self.scenario.scenario_id, seed, total, s0)

    def replay(self, s0: EnvState, actions: Sequence[Primitive | int]) -> Trace:
        """Apply a fixed action sequence; integers are root selections."""
        records = []
        s = s0
        for a in actions:
            rec = self.step_root(s, a) if isinstance(a, int) else self.step_type(s, a)
            records.append(rec)
            s = rec.post
        return Trace(tuple(records), self.scenario.scenario_id, None,
                     math.fsum(r.reward for r in records), s0)


def discounted_return(trace: Trace, gamma_t: float, gamma_r: float) -> float:
    """Return of a trace under the two-level discounting the agents optimize.

    A continue step discounts later rewards by ``gamma_t ** duration``; every
    return of control to the root (leave or completion) discounts by ``gamma_r``.
    """
    total = 0.0
    factor = 1.0
    for rec in trace.records:
        total += factor * rec.reward
        if rec.level == TYPE:
            if rec.duration > 0:
                factor *= gamma_t ** rec.duration
            if rec.exited:
                factor *= gamma_r
    return total

