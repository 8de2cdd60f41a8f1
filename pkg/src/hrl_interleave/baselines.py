"""Comparison policies: myopic next-state value and uniform random choice.

Both speak the flat action vocabulary (``CONTINUE`` or the index of the
instance to switch to) and come with adapters that drive the two-level
environment: a switch is played as a leave followed by the root selection.
"""

from __future__ import annotations

import random

from .environment import CONTINUE, LEAVE, EnvState, Primitive, TaskEnvironment, switch_candidates

FlatAction = Primitive | int


def _ongoing(env: TaskEnvironment, s: EnvState) -> int | None:
    """The active instance, or the one just left when it can still be resumed."""
    if s.active is not None:
        return s.active
    prev = s.previous
    if prev is not None and s.progress[prev] < env.lengths[prev]:
        return prev
    return None


def myopic_values(env: TaskEnvironment, s: EnvState) -> dict[int, float]:
    """Next-step value of every unfinished instance under the true task model.

    ``v(T) = r_T - [T != ongoing] * (c_T + c_ongoing)``: the reward the next
    continue step in ``T`` yields, minus the cost of resuming ``T`` and of
    leaving the ongoing task. Personalized costs are never used.
    """
    ongoing = _ongoing(env, s)
    p = s.progress
    leave_cost = 0.0 if ongoing is None else env.true_costs[ongoing][p[ongoing]]
    values = {}
    for j in env.available_root_actions(s):
        v = env.rewards[j][p[j]]
        if j != ongoing:
            v -= env.true_costs[j][p[j]] + leave_cost
        values[j] = v
    return values


def myopic_action(s: EnvState, env: TaskEnvironment) -> FlatAction:
    """Continue the ongoing task unless another one has a strictly larger value.

    Ties go to the ongoing task, then to the lowest instance id. With no task
    active, the choice is returned as an instance index (re-selecting the
    instance just left counts as continuing it).
    """
    values = myopic_values(env, s)
    if not values:
        raise ValueError("myopic_action called on a terminal state")
    ongoing = _ongoing(env, s)
    best = ongoing
    best_v = values[ongoing] if ongoing is not None else None
    for j, v in values.items():  # tie-break order
        if best_v is None or v > best_v:
            best, best_v = j, v
    if s.active is not None and best == s.active:
        return CONTINUE
    return best


def random_action(s: EnvState, env: TaskEnvironment, rng: random.Random) -> FlatAction:
    """Uniform over continue (when a task is active) and every possible switch."""
    if env.is_terminal(s):
        raise ValueError("random_action called on a terminal state")
    switches = [j for j in env.available_root_actions(s) if j != s.active]
    options: list[FlatAction] = [CONTINUE, *switches] if s.active is not None else switches
    return options[rng.randrange(len(options))]


class MyopicPolicy:
    """Rollout adapter for :func:`myopic_action`."""

    def root_action(self, env: TaskEnvironment, state: EnvState) -> int:
        a = myopic_action(state, env)
        return a if isinstance(a, int) else state.active

    def type_action(self, env: TaskEnvironment, state: EnvState) -> Primitive:
        return CONTINUE if myopic_action(state, env) is CONTINUE else LEAVE

    def switch_action(self, env: TaskEnvironment, state: EnvState) -> int:
        values = myopic_values(env, state)
        values.pop(state.previous, None)
        if not values:
            return self.root_action(env, state)
        return max(values, key=lambda j: (values[j], -env.order.index(j)))


class RandomPolicy:
    """Rollout adapter for :func:`random_action`.

    A sampled switch is remembered and played at the root state that follows
    the leave; any other root query draws uniformly from the available
    instances.
    """

    def __init__(self, seed: int | None = 0) -> None:
        self.reset(seed)

    def reset(self, seed: int | None = None) -> None:
        self.rng = random.Random(seed)
        self._pending: tuple[EnvState, int] | None = None

    def root_action(self, env: TaskEnvironment, state: EnvState) -> int:
        pending, self._pending = self._pending, None
        if pending is not None and pending[0] == state:
            return pending[1]
        available = env.available_root_actions(state)
        return available[self.rng.randrange(len(available))]

    def switch_action(self, env: TaskEnvironment, state: EnvState) -> int:
        candidates = switch_candidates(env, state) or env.available_root_actions(state)
        return candidates[self.rng.randrange(len(candidates))]

    def type_action(self, env: TaskEnvironment, state: EnvState) -> Primitive:
        a = random_action(state, env, self.rng)
        if a is CONTINUE:
            return CONTINUE
        after = EnvState(state.progress, None, state.active, state.clock, state.budget, False)
        self._pending = (after, a)
        return LEAVE
