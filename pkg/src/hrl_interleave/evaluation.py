"""Metrics comparing policies with reference (participant) traces.

Accuracies are teacher-forced: the policy is queried at the reference's own
states. Only the task order comes from a free-running rollout of the policy.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .environment import (CONTINUE, LEAVE, ROOT, TYPE, EnvState, Policy, TaskEnvironment, Trace,
                          switch_choice)


# --- events ------------------------------------------------------------------


def switch_events(trace: Trace) -> list[tuple[EnvState, int]]:
    """Root states right after a leave, paired with the different instance chosen next."""
    events = []
    records = trace.records
    for k in range(1, len(records)):
        prev, rec = records[k - 1], records[k]
        if (rec.level == ROOT and prev.level == TYPE and prev.action == LEAVE
                and rec.action != rec.pre.previous):
            events.append((rec.pre, rec.action))
    return events


def leave_events(trace: Trace) -> list[EnvState]:
    return [r.pre for r in trace.records if r.level == TYPE and r.action == LEAVE]


def continue_events(trace: Trace) -> list[EnvState]:
    return [r.pre for r in trace.records
            if r.level == TYPE and r.action == CONTINUE and not r.is_truncation]


def visit_sequence(trace: Trace, ids: Sequence[str]) -> list[str]:
    """Instance ids of root selections, consecutive repeats collapsed."""
    seq: list[str] = []
    for r in trace.records:
        if r.level == ROOT:
            iid = ids[r.action]
            if not seq or seq[-1] != iid:
                seq.append(iid)
    return seq


# --- accuracies --------------------------------------------------------------


def _reset(policy, seed: int | None) -> None:
    reset = getattr(policy, "reset", None)
    if reset is not None:
        reset(seed)


def _next_hits(reference: Trace, policy: Policy, env: TaskEnvironment,
               seed: int | None) -> tuple[int, int]:
    events = switch_events(reference)
    _reset(policy, seed)
    return sum(switch_choice(policy, env, s) == chosen for s, chosen in events), len(events)


def _type_hits(reference: Trace, action, policy: Policy, env: TaskEnvironment,
               seed: int | None) -> tuple[int, int]:
    # the policy is asked at every type-level decision in order, so stateful
    # policies see the same history whichever action is being scored
    _reset(policy, seed)
    hits = n = 0
    for r in reference.records:
        if r.level != TYPE or r.is_truncation:
            continue
        answer = policy.type_action(env, r.pre)
        if r.action == action:
            hits += answer == action
            n += 1
    return hits, n


def _leave_hits(reference, policy, env, seed):
    return _type_hits(reference, LEAVE, policy, env, seed)


def _continue_hits(reference, policy, env, seed):
    return _type_hits(reference, CONTINUE, policy, env, seed)


def _fraction(hits: int, n: int) -> float | None:
    return hits / n if n else None


def next_task_accuracy(reference: Trace, policy: Policy, env: TaskEnvironment,
                       seed: int | None = 0) -> float | None:
    """Fraction of switch events where the policy picks the reference's next instance.

    The policy is asked which instance it would switch to (see
    :func:`switch_choice`): in a reference a leave always means moving on,
    whereas an agent may value resuming the instance it just left. None when
    the reference has no switch event.
    """
    return _fraction(*_next_hits(reference, policy, env, seed))


def leave_accuracy(reference: Trace, policy: Policy, env: TaskEnvironment,
                   seed: int | None = 0) -> float | None:
    """Fraction of reference leaves the policy also leaves at; None without leaves."""
    return _fraction(*_leave_hits(reference, policy, env, seed))


def continue_accuracy(reference: Trace, policy: Policy, env: TaskEnvironment,
                      seed: int | None = 0) -> float | None:
    """Fraction of reference continue steps the policy also continues at."""
    return _fraction(*_continue_hits(reference, policy, env, seed))


def order_error(a: Sequence, b: Sequence) -> int:
    """Positionwise mismatches; the shorter sequence is padded with a sentinel."""
    n = max(len(a), len(b))
    sentinel = object()
    pa = list(a) + [sentinel] * (n - len(a))
    pb = list(b) + [sentinel] * (n - len(b))
    return sum(x is sentinel or y is sentinel or x != y for x, y in zip(pa, pb))


# --- visitation ----------------------------------------------------------------


def visitation_counts(traces: Iterable[Trace], env: TaskEnvironment, type_id: str) -> np.ndarray:
    """Continue-step pre-states of all instances of ``type_id``."""
    length = env.scenario.types_by_id[type_id].length
    counts = np.zeros(length)
    for trace in traces:
        for s in continue_events(trace):
            i = s.active
            if env.types[i].type_id == type_id:
                counts[s.progress[i]] += 1
    return counts


def state_visitation_histogram(traces: Iterable[Trace], env: TaskEnvironment,
                               type_id: str) -> np.ndarray:
    """Normalized visitation histogram; empty array when the type was never visited."""
    counts = visitation_counts(traces, env, type_id)
    total = counts.sum()
    return counts / total if total > 0 else np.zeros(0)


def histogram_intersection(h1: Sequence[float], h2: Sequence[float]) -> float:
    h1, h2 = np.asarray(h1, float), np.asarray(h2, float)
    if h1.size == 0 or h2.size == 0:
        return 0.0
    if h1.shape != h2.shape:
        raise ValueError(f"histogram lengths differ: {h1.size} vs {h2.size}")
    return float(np.minimum(h1, h2).sum())


def learning_curve(runs: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    """Per-episode mean and (population) standard deviation over runs."""
    if not runs:
        raise ValueError("learning_curve needs at least one run")
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ValueError(f"runs have different lengths: {sorted(lengths)}")
    data = np.asarray(runs, float)
    return data.mean(axis=0), data.std(axis=0)


def asymptote(curve: np.ndarray, tail: float = 0.1) -> float:
    """Mean of the last ``tail`` fraction of a learning curve."""
    k = max(1, int(round(len(curve) * tail)))
    return float(np.mean(curve[-k:]))


def episodes_to_fraction(curve: np.ndarray, fraction: float = 0.9, tail: float = 0.1) -> int:
    """First episode whose value reaches ``fraction`` of the curve's asymptote."""
    target = fraction * asymptote(curve, tail)
    hits = np.nonzero(curve >= target)[0]
    return int(hits[0]) if hits.size else len(curve)


# --- report --------------------------------------------------------------------


@dataclass
class MetricReport:
    reward: float
    next_task_accuracy: float | None
    leave_accuracy: float | None
    continue_accuracy: float | None
    order_error: int
    visitation: dict[str, list[float]] = field(default_factory=dict)
    intersections: dict[str, float] = field(default_factory=dict)
    teacher_forced: bool = True

    CSV_FIELDS = ("participant", "model", "reward", "next_task_accuracy", "leave_accuracy",
                  "continue_accuracy", "order_error", "intersection_pooled")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def csv_row(self, participant: str = "", model: str = "") -> dict:
        row = {k: getattr(self, k) for k in self.CSV_FIELDS[2:-1]}
        row.update(participant=participant, model=model,
                   intersection_pooled=self.intersections.get("pooled"))
        return {k: ("" if row[k] is None else row[k]) for k in self.CSV_FIELDS}


def reports_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=MetricReport.CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def evaluate(references: Sequence[Trace], policy: Policy, env: TaskEnvironment,
             seed: int = 0) -> MetricReport:
    """Full metric battery of ``policy`` against one or more reference traces.

    Accuracies pool events over all references. The policy is also rolled out
    from each reference's initial state (same budget); those rollouts supply
    the reward, the task order and the visitation histograms. ``order_error``
    is summed over references.
    """
    if not references:
        raise ValueError("evaluate needs at least one reference trace")
    counts = {}
    for key, fn in (("next", _next_hits), ("leave", _leave_hits), ("continue", _continue_hits)):
        pairs = [fn(ref, policy, env, seed) for ref in references]
        counts[key] = _fraction(sum(h for h, _ in pairs), sum(n for _, n in pairs))
    rollouts = [env.rollout(policy, ref.initial, seed=seed + k) for k, ref in enumerate(references)]
    err = sum(order_error(visit_sequence(ref, env.ids), visit_sequence(ro, env.ids))
              for ref, ro in zip(references, rollouts))
    visitation, intersections = {}, {}
    pooled_model, pooled_ref = [], []
    for t in env.scenario.task_types:
        model_counts = visitation_counts(rollouts, env, t.type_id)
        ref_counts = visitation_counts(references, env, t.type_id)
        pooled_model.append(model_counts)
        pooled_ref.append(ref_counts)
        h_model = state_visitation_histogram(rollouts, env, t.type_id)
        visitation[t.type_id] = h_model.tolist()
        if h_model.size and ref_counts.sum() > 0:
            intersections[t.type_id] = histogram_intersection(
                h_model, ref_counts / ref_counts.sum())
    pm, pr = np.concatenate(pooled_model), np.concatenate(pooled_ref)
    if pm.sum() > 0 and pr.sum() > 0:
        intersections["pooled"] = histogram_intersection(pm / pm.sum(), pr / pr.sum())
    reward = math.fsum(ro.total_reward for ro in rollouts) / len(rollouts)

    return MetricReport(reward, counts["next"], counts["leave"], counts["continue"], err,
                        visitation, intersections)


class ReplayPolicy:
    """Plays back the actions of a reference trace.

    A trial may revisit a state and act differently the second time, so the
    answer at a state is the action of its next occurrence after the last
    one played. :meth:`reset` rewinds to the start of the trace.
    """

    def __init__(self, trace: Trace) -> None:
        self._records = [r for r in trace.records if not r.is_truncation]
        self.reset()

    def reset(self, seed: int | None = None) -> None:
        self._cursor = 0

    def _next(self, state: EnvState):
        for k in range(self._cursor, len(self._records)):
            if self._records[k].pre == state:
                self._cursor = k + 1
                return self._records[k].action
        return None

    def root_action(self, env: TaskEnvironment, state: EnvState) -> int:
        action = self._next(state)
        if action is None:
            raise KeyError(f"state {state} not in the replayed trace")
        return action

    def switch_action(self, env: TaskEnvironment, state: EnvState) -> int:
        return self.root_action(env, state)

    def type_action(self, env: TaskEnvironment, state: EnvState):
        # past the reference's last step (truncated budget) just continue
        action = self._next(state)
        return CONTINUE if action is None else action
