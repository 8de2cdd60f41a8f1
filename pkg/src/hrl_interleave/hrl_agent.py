"""Hierarchically optimal two-level Q-learning for task interleaving.

Values follow a three-part decomposition. Each task type owns one table over
(in-task state, continue/leave), shared by all of its instances, holding only
the context-free internal part: the discounted reward of running the
instance to completion, and the reward of leaving. The external part, what
the remaining tasks are worth once control returns to the root, depends on
the context and is read from the root table at the exact exit state when a
decision is made. The root table is keyed by the full progress vector.

Discounting: a continue step discounts by ``gamma_t ** dwell``; each return
of control to the root discounts by ``gamma_r``.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import asdict, dataclass, field

from .environment import (CONTINUE, LEAVE, EnvState, Primitive, TaskEnvironment,
                          TransitionRecord)
from .scenarios import Mode, Scenario
from .task_model import ParamSet, ValidationError

logger = logging.getLogger(__name__)

_ACTIONS = (CONTINUE, LEAVE)


@dataclass(frozen=True)
class LearningConfig:
    episodes: int = 250
    alpha: float = 0.1
    epsilon_start: float = 0.3
    epsilon_end: float = 0.01
    gamma_t: float = 0.9
    gamma_r: float = 0.99
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ValidationError("episodes must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must lie in (0, 1], got {self.alpha}")
        for name in ("epsilon_start", "epsilon_end", "gamma_t", "gamma_r"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")

    def epsilon(self, episode: int) -> float:
        """Linearly decayed exploration rate for a 0-based episode index."""
        if self.episodes == 1:
            return self.epsilon_start
        frac = episode / (self.episodes - 1)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac

    def with_params(self, params: ParamSet | None) -> "LearningConfig":
        if params is None:
            return self
        return LearningConfig(self.episodes, self.alpha, self.epsilon_start, self.epsilon_end,
                              params.gamma_t, self.gamma_r, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


class TypeQTable:
    """Q-values of one task type, ``values[state] = [Q(continue), Q(leave)]``."""

    def __init__(self, type_id: str, length: int) -> None:
        self.type_id = type_id
        self.values = [[0.0, 0.0] for _ in range(length)]
        self.visited: set[tuple[int, int]] = set()

    def q(self, state: int, action: Primitive) -> float:
        return self.values[state][0 if action == CONTINUE else 1]

    def best(self, state: int) -> float:
        row = self.values[state]
        return row[0] if row[0] >= row[1] else row[1]


class RootQTable:
    """Q-values over (root state key, instance).

    The key is the full progress vector plus the instance that may be resumed
    for free (the one just left), ``-1`` when that instance is completed and
    ``None`` at episode start.
    """

    def __init__(self) -> None:
        self.values: dict[tuple, dict[int, float]] = {}

    def value(self, key: tuple, available) -> float:
        row = self.values.get(key)
        if row is None:
            return 0.0
        return max(row.get(i, 0.0) for i in available)

    def entries(self) -> int:
        return sum(len(row) for row in self.values.values())


def root_key(env: TaskEnvironment, s: EnvState) -> tuple:
    prev = s.previous
    if prev is not None and s.progress[prev] >= env.lengths[prev]:
        prev = -1
    return (s.progress, prev)


@dataclass
class HierarchicalPolicy:
    """Trained type tables and root table; acts greedily as a rollout policy."""

    scenario: Scenario
    config: LearningConfig
    type_tables: dict[str, TypeQTable]
    root: RootQTable
    params: ParamSet | None = None
    returns: list[float] = field(default_factory=list)
    free_first_selection: bool = False
    _lookahead: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def table_for(self, env: TaskEnvironment, i: int) -> TypeQTable:
        return self.type_tables[env.types[i].type_id]

    def root_action(self, env: TaskEnvironment, state: EnvState) -> int:
        return greedy_action(self, state, env)

    def type_action(self, env: TaskEnvironment, state: EnvState) -> Primitive:
        return greedy_action(self, state, env)

    def switch_action(self, env: TaskEnvironment, state: EnvState) -> int:
        """Best selection other than resuming the instance just left."""
        values = root_option_values(self, env, state)
        values.pop(state.previous, None)
        if not values:
            return greedy_action(self, state, env)
        return max(values, key=lambda j: (values[j], -env.order.index(j)))


def new_policy(scenario: Scenario, config: LearningConfig, params: ParamSet | None = None,
               free_first_selection: bool = False) -> HierarchicalPolicy:
    tables = {t.type_id: TypeQTable(t.type_id, t.length) for t in scenario.task_types}
    return HierarchicalPolicy(scenario, config, tables, RootQTable(), params,
                              free_first_selection=free_first_selection)


class _Lookahead:
    """Value queries of one policy in one environment, flattened for speed.

    Holds references to the live tables, so it stays current while training.
    """

    def __init__(self, policy: HierarchicalPolicy, env: TaskEnvironment) -> None:
        self.tables = [policy.type_tables[t.type_id].values for t in env.types]
        self.rows = policy.root.values
        self.costs = env.costs
        self.lengths = env.lengths
        self.order = env.order
        self.free_first = env.free_first_selection
        self.gamma_r = policy.config.gamma_r
        self.steps = [policy.config.gamma_t ** d for d in env.dwell]

    def root0(self, progress: tuple, prev) -> float:
        """Depth-0 root value: stored entries, else penalty plus internal value."""
        row = self.rows.get((progress, prev))
        tables, lengths, costs = self.tables, self.lengths, self.costs
        free = prev is None and self.free_first
        best = None
        for j in self.order:
            z = progress[j]
            if z >= lengths[j]:
                continue
            if j == prev:
                q = tables[j][z][0]
            elif row is not None and j in row:
                q = row[j]
            elif free:
                q = tables[j][z][0]
            else:
                q = tables[j][z][0] - costs[j][z]
            if best is None or q > best:
                best = q
        return 0.0 if best is None else best

    def root(self, progress: tuple, prev, depth: int) -> float:
        if depth <= 0:
            return self.root0(progress, prev)
        values = [self.option(progress, prev, j, depth) for j in self.order
                  if progress[j] < self.lengths[j]]
        return max(values) if values else 0.0

    def option(self, progress: tuple, prev, j: int, depth: int) -> float:
        if j == prev:
            # re-selecting the instance just left is free; leaving it again at
            # once would only repeat a zero-progress cycle, so value it by continuing
            return self.cont(progress, j, depth)
        if depth <= 0:
            row = self.rows.get((progress, prev))
            if row is not None and j in row:
                return row[j]
        penalty = 0.0 if prev is None and self.free_first else self.costs[j][progress[j]]
        return self.cont(progress, j, depth) - penalty

    def cont(self, progress: tuple, i: int, depth: int) -> float:
        table = self.tables[i]
        z = progress[i]
        if depth <= 0:
            return table[z][0]
        length = self.lengths[i]
        step = self.steps[i]
        gamma_r = self.gamma_r
        head, tail = progress[:i], progress[i + 1:]
        root = self.root0 if depth == 1 else lambda p, prev: self.root(p, prev, depth - 1)
        best = step ** (length - z) * gamma_r * root(head + (length,) + tail, -1)
        d = step
        for e in range(z + 1, length):
            row = table[e]
            leave = row[1] + gamma_r * root(head + (e,) + tail, i)
            gain = d * (leave - row[0])
            if gain > best:
                best = gain
            d *= step
        return table[z][0] + best

    def leave(self, progress: tuple, i: int, depth: int) -> float:
        return self.tables[i][progress[i]][1] + self.gamma_r * self.root(progress, i, depth - 1)


def _lookahead(policy: HierarchicalPolicy, env: TaskEnvironment) -> _Lookahead:
    cached = policy._lookahead
    if cached is not None and cached[0] is env:
        return cached[1]
    la = _Lookahead(policy, env)
    policy._lookahead = (env, la)
    return la


def root_value_at(policy: HierarchicalPolicy, env: TaskEnvironment, progress: tuple, prev,
                  depth: int = 0) -> float:
    """Best root option at key ``(progress, prev)``; 0 when every instance is done."""
    return _lookahead(policy, env).root(progress, prev, depth)


def continue_value(policy: HierarchicalPolicy, env: TaskEnvironment, progress: tuple, i: int,
                   depth: int = 1) -> float:
    """Value of continuing instance ``i`` in the context ``progress``.

    The context-free internal value G(z) (discounted reward of running the
    instance to completion) is corrected by the best exit point ``e``: leaving
    at ``e`` or completing swaps the tail ``G(e)`` for the exit value
    ``X(e)`` read from the root table at the exact state control returns to.
    At ``depth`` 0 the external part is dropped.
    """
    return _lookahead(policy, env).cont(progress, i, depth)


def leave_value(policy: HierarchicalPolicy, env: TaskEnvironment, progress: tuple, i: int,
                depth: int = 1) -> float:
    """Internal leave reward plus the discounted root value after leaving ``i``."""
    return _lookahead(policy, env).leave(progress, i, depth)


def type_values(policy: HierarchicalPolicy, env: TaskEnvironment, s: EnvState) -> tuple[float, float]:
    """(continue, leave) values of the active instance in state ``s``."""
    i = s.active
    return continue_value(policy, env, s.progress, i), leave_value(policy, env, s.progress, i)


def root_option_values(policy: HierarchicalPolicy, env: TaskEnvironment, s: EnvState) -> dict[int, float]:
    """Value of every available selection at root state ``s``, in tie-break order."""
    progress, prev = root_key(env, s)
    la = _lookahead(policy, env)
    return {j: la.option(progress, prev, j, 1) for j in env.available_root_actions(s)}


def greedy_action(policy: HierarchicalPolicy, s: EnvState, env: TaskEnvironment):
    """Argmax action; ties prefer continue, then the lowest instance id."""
    if s.active is not None:
        cont, leave = type_values(policy, env, s)
        return CONTINUE if cont >= leave else LEAVE
    values = root_option_values(policy, env, s)
    if not values:
        raise ValueError("greedy_action called on a terminal state")
    best, best_q = None, -math.inf
    for j, q in values.items():  # already in tie-break order
        if q > best_q:
            best, best_q = j, q
    return best


def update_type_q(policy: HierarchicalPolicy, rec: TransitionRecord, env: TaskEnvironment,
                  config: LearningConfig) -> float | None:
    """Sample backup of the internal value of one type-level transition.

    Continue bootstraps from the internal continue value of the next state and
    from nothing at completion; leave keeps only its own (negative) reward.
    What happens after the exit is context dependent and is added when acting
    (see :func:`continue_value`). Budget truncations are not learned from.
    Returns the target, or None when nothing was updated.
    """
    if rec.is_truncation:
        return None
    i = rec.pre.active
    table = policy.table_for(env, i)
    state = rec.pre.progress[i]
    if rec.action == CONTINUE:
        a = 0
        target = rec.reward
        if not rec.exited:
            target += config.gamma_t ** rec.duration * table.values[state + 1][0]
    else:
        a = 1
        target = rec.reward
    row = table.values[state]
    row[a] += config.alpha * (target - row[a])
    table.visited.add((state, a))
    return target


def update_root_q(policy: HierarchicalPolicy, selection: TransitionRecord, env: TaskEnvironment,
                  config: LearningConfig) -> float:
    """Backup of a root selection once its subroutine has exited; returns the target.

    The target is the resumption penalty plus the current best value of the
    resumed instance in the context it was selected in.
    """
    i = selection.action
    target = selection.reward + max(type_values(policy, env, selection.post))
    row = policy.root.values.setdefault(root_key(env, selection.pre), {})
    old = row.get(i, 0.0)
    row[i] = old + config.alpha * (target - old)
    return target


def train(scenario: Scenario, config: LearningConfig | None = None, params: ParamSet | None = None,
          free_first_selection: bool = False) -> HierarchicalPolicy:
    """Train a hierarchical policy with epsilon-greedy episodes run to completion.

    ``params`` (when given) supplies the type-level discount and personalized
    switch costs.
    """
    config = (config or LearningConfig()).with_params(params)
    if params is not None:
        params.validate()
    env = TaskEnvironment(scenario, params, free_first_selection)
    policy = new_policy(scenario, config, params, free_first_selection)
    rng = random.Random(config.seed)
    max_steps = 100 * sum(env.lengths) + 100
    for episode in range(config.episodes):
        eps = config.epsilon(episode)
        s = env.reset(Mode())
        total = 0.0
        selection = None
        steps = 0
        while not env.is_terminal(s):
            steps += 1
            if steps > max_steps:
                logger.warning("episode %d truncated after %d steps", episode, max_steps)
                break
            if s.active is None:
                if selection is None and env.forced_first is not None:
                    i = env.forced_first
                elif rng.random() < eps:
                    available = env.available_root_actions(s)
                    i = available[rng.randrange(len(available))]
                else:
                    i = greedy_action(policy, s, env)
                selection = env.step_root(s, i)
                total += selection.reward
                s = selection.post
                continue
            if rng.random() < eps:
                a = _ACTIONS[rng.randrange(2)]
            else:
                a = greedy_action(policy, s, env)
            rec = env.step_type(s, a)
            total += rec.reward
            update_type_q(policy, rec, env, config)
            if rec.exited:
                update_root_q(policy, selection, env, config)
            s = rec.post
        if not math.isfinite(total) or not all(
                math.isfinite(v) for t in policy.type_tables.values() for r in t.values for v in r):
            raise FloatingPointError(f"non-finite value after episode {episode} (return {total})")
        policy.returns.append(total)
    return policy


def distinct_entries(policy: HierarchicalPolicy) -> tuple[int, int]:
    """Number of populated (type, state, action) and (root key, instance) entries."""
    type_entries = sum(len(t.visited) for t in policy.type_tables.values())
    return type_entries, policy.root.entries()
