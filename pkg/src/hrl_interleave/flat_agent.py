"""Flat SMDP Q-learning over the joint state, and an exact value-iteration oracle.

The flat agent sees ``(active instance, progress vector)`` and picks either
``continue`` or ``switch_to(j)``; a switch folds the leave cost of the active
instance and the resumption cost of ``j`` into one step, so both agents
decide equally often. Both the flat learner and the oracle optimize the same
two-level discounting as the hierarchical agent.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field

from .environment import (CONTINUE, LEAVE, EnvState, Primitive, TaskEnvironment)
from .hrl_agent import LearningConfig
from .scenarios import Mode, Scenario
from .task_model import ParamSet

FlatAction = Primitive | int


class StateSpaceTooLarge(RuntimeError):
    pass


def flat_key(s: EnvState) -> tuple:
    return (s.active, s.progress)


def flat_actions(env: TaskEnvironment, s: EnvState) -> list[FlatAction]:
    """``continue`` (when a task is active) followed by switches in tie-break order."""
    p, lengths = s.progress, env.lengths
    switches = [j for j in env.order if p[j] < lengths[j] and j != s.active]
    return [CONTINUE, *switches] if s.active is not None else switches


def _argmax(row: dict, actions: list[FlatAction]) -> FlatAction:
    best, best_q = actions[0], row.get(actions[0], 0.0)
    for a in actions[1:]:
        q = row.get(a, 0.0)
        if q > best_q:
            best, best_q = a, q
    return best


@dataclass
class FlatPolicy:
    """Flat Q-table; usable as a rollout policy on the hierarchical environment."""

    scenario: Scenario
    config: LearningConfig
    table: dict[tuple, dict[FlatAction, float]] = field(default_factory=dict)
    params: ParamSet | None = None
    returns: list[float] = field(default_factory=list)
    free_first_selection: bool = False

    def entries(self) -> int:
        return sum(len(row) for row in self.table.values())

    def root_action(self, env: TaskEnvironment, state: EnvState) -> int:
        prev = state.previous
        if prev is not None and not env.is_completed(state, prev):
            # just left ``prev``: the switch target is chosen as from ``prev``
            probe = EnvState(state.progress, prev, prev, state.clock, state.budget)
            actions = [a for a in flat_actions(env, probe) if a is not CONTINUE]
            if not actions:
                return prev
            return _argmax(self.table.get(flat_key(probe), {}), actions)
        return greedy_flat(self, env, state)

    def type_action(self, env: TaskEnvironment, state: EnvState) -> Primitive:
        return CONTINUE if greedy_flat(self, env, state) is CONTINUE else LEAVE

    def switch_action(self, env: TaskEnvironment, state: EnvState) -> int:
        return self.root_action(env, state)


def greedy_flat(policy: FlatPolicy, env: TaskEnvironment, s: EnvState) -> FlatAction:
    """Argmax flat action; ties prefer continue, then the lowest instance id."""
    actions = flat_actions(env, s)
    if not actions:
        raise ValueError("greedy_flat called on a terminal state")
    return _argmax(policy.table.get(flat_key(s), {}), actions)


def flat_step(env: TaskEnvironment, s: EnvState, a: FlatAction, gamma_t: float, gamma_r: float):
    """Execute one flat action; returns (reward, discount to the next decision, post state)."""
    if a is CONTINUE:
        rec = env.step_type(s, CONTINUE)
        disc = gamma_t ** rec.duration
        if rec.exited:
            disc *= gamma_r
        return rec.reward, disc, rec.post
    if s.active is None:
        rec = env.step_root(s, a)
        return rec.reward, 1.0, rec.post
    leave = env.step_type(s, LEAVE)
    select = env.step_root(leave.post, a)
    return leave.reward + select.reward, gamma_r, select.post


def train_flat(scenario: Scenario, config: LearningConfig | None = None,
               params: ParamSet | None = None, free_first_selection: bool = False) -> FlatPolicy:
    config = (config or LearningConfig()).with_params(params)
    if params is not None:
        params.validate()
    env = TaskEnvironment(scenario, params, free_first_selection)
    policy = FlatPolicy(scenario, config, params=params, free_first_selection=free_first_selection)
    table = policy.table
    rng = random.Random(config.seed)
    alpha, gamma_t, gamma_r = config.alpha, config.gamma_t, config.gamma_r
    for episode in range(config.episodes):
        eps = config.epsilon(episode)
        s = env.reset(Mode())
        total = 0.0
        first = True
        while not env.is_terminal(s):
            actions = flat_actions(env, s)
            key = flat_key(s)
            row = table.get(key)
            if row is None:
                row = table[key] = {}
            if first and env.forced_first is not None:
                a = env.forced_first
            elif rng.random() < eps:
                a = actions[rng.randrange(len(actions))]
            else:
                a = _argmax(row, actions)
            first = False
            reward, disc, post = flat_step(env, s, a, gamma_t, gamma_r)
            total += reward
            if env.is_terminal(post):
                boot = 0.0
            else:
                nrow = table.get(flat_key(post))
                if nrow is None:
                    boot = 0.0
                else:
                    boot = max(nrow.get(b, 0.0) for b in flat_actions(env, post))
            old = row.get(a, 0.0)
            row[a] = old + alpha * (reward + disc * boot - old)
            s = post
        if not math.isfinite(total):
            raise FloatingPointError(f"non-finite return in episode {episode}")
        policy.returns.append(total)
    # drop keys never updated (visited only as bootstrap targets)
    for key in [k for k, row in table.items() if not row]:
        del table[key]
    return policy


# --- exact oracle -------------------------------------------------------------


@dataclass
class ValueIterationResult:
    """Optimal values of the joint two-level problem.

    ``q_type[(i, progress)] = (Q(continue), Q(leave))`` for active instance
    ``i``; ``q_root[(progress, prev)][j]`` for root selections, where ``prev``
    is the instance that may be resumed for free (``None`` at episode start,
    ``-1`` when there is none).
    """

    q_type: dict[tuple, tuple[float, float]]
    q_root: dict[tuple, dict[int, float]]
    residuals: list[float]
    start_value: float
    gamma_t: float
    gamma_r: float

    def root_action(self, env: TaskEnvironment, state: EnvState) -> int:
        row = self.q_root[_vi_root_key(env, state)]
        available = env.available_root_actions(state)
        best, best_q = available[0], row[available[0]]
        for j in available[1:]:
            if row[j] > best_q + 1e-12:
                best, best_q = j, row[j]
        return best

    def switch_action(self, env: TaskEnvironment, state: EnvState) -> int:
        row = self.q_root[_vi_root_key(env, state)]
        candidates = [j for j in env.available_root_actions(state) if j != state.previous]
        if not candidates:
            return self.root_action(env, state)
        best = candidates[0]
        for j in candidates[1:]:
            if row[j] > row[best] + 1e-12:
                best = j
        return best

    def type_action(self, env: TaskEnvironment, state: EnvState) -> Primitive:
        cont, leave = self.q_type[(state.active, state.progress)]
        return CONTINUE if cont >= leave - 1e-12 else LEAVE

    @property
    def residual(self) -> float:
        return self.residuals[-1]


def _vi_root_key(env: TaskEnvironment, s: EnvState) -> tuple:
    prev = s.previous
    if prev is not None and s.progress[prev] >= env.lengths[prev]:
        prev = -1
    return (s.progress, prev)


def value_iteration(scenario: Scenario, gamma_t: float, gamma_r: float,
                    params: ParamSet | None = None, free_first_selection: bool = False,
                    tol: float = 1e-10, max_states: int = 1_000_000,
                    max_sweeps: int = 100_000) -> ValueIterationResult:
    """Jacobi value iteration on the reachable joint state space.

    Root states are folded into the type-level states they lead to, so every
    transition is discounted by ``gamma_t ** dwell`` or ``gamma_r``.
    """
    env = TaskEnvironment(scenario, params, free_first_selection)
    lengths, n = env.lengths, env.n
    s0 = env.reset(Mode())

    # enumerate reachable root and type states
    type_states: dict[tuple, int] = {}
    root_states: dict[tuple, None] = {}
    start_key = (s0.progress, None)
    queue = deque([("root", start_key)])
    root_states[start_key] = None
    while queue:
        kind, key = queue.popleft()
        if kind == "root":
            progress, prev = key
            if s0.previous is None and key == start_key and env.forced_first is not None:
                choices = [env.forced_first]
            else:
                choices = [j for j in range(n) if progress[j] < lengths[j]]
            for j in choices:
                tkey = (j, progress)
                if tkey not in type_states:
                    type_states[tkey] = len(type_states)
                    queue.append(("type", tkey))
        else:
            i, progress = key
            succ = []
            nxt = progress[:i] + (progress[i] + 1,) + progress[i + 1:]
            if nxt[i] >= lengths[i]:
                succ.append(("root", (nxt, -1)))
            else:
                succ.append(("type", (i, nxt)))
            succ.append(("root", (progress, i)))
            for kind2, key2 in succ:
                if kind2 == "type":
                    if key2 not in type_states:
                        type_states[key2] = len(type_states)
                        queue.append((kind2, key2))
                elif key2 not in root_states:
                    root_states[key2] = None
                    queue.append((kind2, key2))
        if len(type_states) + len(root_states) > max_states:
            raise StateSpaceTooLarge(
                f"joint state space exceeds {max_states} states")

    def penalty(progress, prev, j):
        if j == prev:
            return 0.0
        if prev is None and free_first_selection:
            return 0.0
        return env.costs[j][progress[j]]

    # precompute transition structure for type states
    plan = []
    for (i, progress), _ in sorted(type_states.items(), key=lambda kv: kv[1]):
        state = progress[i]
        nxt = progress[:i] + (state + 1,) + progress[i + 1:]
        r = env.rewards[i][state]
        dt = gamma_t ** env.dwell[i]
        cont_target = ("root", (nxt, -1)) if nxt[i] >= lengths[i] else ("type", (i, nxt))
        plan.append((i, progress, r, dt, cont_target, -env.costs[i][state], (progress, i)))

    root_choices = {}
    for key in root_states:
        progress, prev = key
        if key == start_key and env.forced_first is not None:
            js = [env.forced_first]
        else:
            js = [j for j in range(n) if progress[j] < lengths[j]]
        root_choices[key] = [(j, -penalty(progress, prev, j), type_states[(j, progress)]) for j in js]

    values = [0.0] * len(type_states)

    def root_value(vals, key):
        choices = root_choices[key]
        if not choices:
            return 0.0
        return max(pen + vals[t] for _, pen, t in choices)

    residuals: list[float] = []
    q_cont = [0.0] * len(plan)
    q_leave = [0.0] * len(plan)
    for _ in range(max_sweeps):
        root_vals = {key: root_value(values, key) for key in root_states}
        new = [0.0] * len(plan)
        for idx, (i, progress, r, dt, target, leave_r, leave_key) in enumerate(plan):
            kind, key = target
            if kind == "type":
                cont = r + dt * values[type_states[key]]
            else:
                cont = r + dt * gamma_r * root_vals[key]
            leave = leave_r + gamma_r * root_vals[leave_key]
            q_cont[idx], q_leave[idx] = cont, leave
            new[idx] = cont if cont >= leave else leave
        residual = max((abs(a - b) for a, b in zip(new, values)), default=0.0)
        residuals.append(residual)
        values = new
        if residual < tol:
            break
    else:
        raise RuntimeError(f"value iteration did not converge in {max_sweeps} sweeps")

    # one more evaluation so Q is consistent with the final values
    root_vals = {key: root_value(values, key) for key in root_states}
    q_type = {}
    for idx, (i, progress, r, dt, target, leave_r, leave_key) in enumerate(plan):
        kind, key = target
        cont = r + dt * (values[type_states[key]] if kind == "type" else gamma_r * root_vals[key])
        q_type[(i, progress)] = (cont, leave_r + gamma_r * root_vals[leave_key])
    q_root = {key: {j: pen + values[t] for j, pen, t in choices}
              for key, choices in root_choices.items()}
    return ValueIterationResult(q_type, q_root, residuals, root_vals[start_key], gamma_t, gamma_r)


def bellman_residual(result: ValueIterationResult, scenario: Scenario,
                     params: ParamSet | None = None, free_first_selection: bool = False) -> float:
    """Sup-norm of ``T Q - Q`` for the returned type-level Q-values."""
    env = TaskEnvironment(scenario, params, free_first_selection)
    lengths = env.lengths

    def v_type(i, progress):
        return max(result.q_type[(i, progress)])

    def v_root(key):
        row = result.q_root.get(key)
        return max(row.values()) if row else 0.0

    worst = 0.0
    for (i, progress), (cont, leave) in result.q_type.items():
        state = progress[i]
        nxt = progress[:i] + (state + 1,) + progress[i + 1:]
        dt = result.gamma_t ** env.dwell[i]
        if nxt[i] >= lengths[i]:
            t_cont = env.rewards[i][state] + dt * result.gamma_r * v_root((nxt, -1))
        else:
            t_cont = env.rewards[i][state] + dt * v_type(i, nxt)
        t_leave = -env.costs[i][state] + result.gamma_r * v_root((progress, i))
        worst = max(worst, abs(t_cont - cont), abs(t_leave - leave))
    return worst
