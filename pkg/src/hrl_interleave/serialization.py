"""Files: scenarios (JSON), traces (JSON lines / CSV) and policy snapshots (JSON).

Every writer produces canonical output (sorted keys, fixed separators,
trailing newline), so the same object always serializes to the same bytes.
Floats use Python's shortest round-tripping representation.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path
from typing import Any

from .environment import CONTINUE, ROOT, TYPE, EnvState, Primitive, Trace, TransitionRecord
from .flat_agent import FlatPolicy
from .hrl_agent import HierarchicalPolicy, LearningConfig, RootQTable, TypeQTable
from .scenarios import Mode, Scenario
from .task_model import ParamSet, TaskInstanceSpec, TaskTypeSpec, ValidationError

FORMAT_VERSION = 1
TRACE_COLUMNS = ("step", "clock", "level", "active_instance", "state", "action",
                 "reward", "duration", "exited")


def dumps(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write_text(path: str | os.PathLike, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ValidationError(f"{where}: missing field {key!r}")
    return data[key]


def _check_version(data: dict, where: str) -> None:
    version = _require(data, "format_version", where)
    if version != FORMAT_VERSION:
        raise ValidationError(f"{where}: unsupported format_version {version!r}")


# --- scenarios -----------------------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "scenario_id": scenario.scenario_id,
        "description": scenario.description,
        "mode": scenario.mode.to_dict(),
        "forced_first": scenario.forced_first,
        "task_types": [
            {"type_id": t.type_id, "length": t.length, "rewards": list(t.rewards),
             "costs": list(t.costs), "dwell": t.dwell, "label": t.label}
            for t in scenario.task_types
        ],
        "instances": [
            {"instance_id": i.instance_id, "type_id": i.type_id, "start_state": i.start_state}
            for i in scenario.instances
        ],
    }


def scenario_from_dict(data: dict) -> Scenario:
    where = "scenario"
    _check_version(data, where)
    types = []
    for k, t in enumerate(_require(data, "task_types", where)):
        w = f"{where}.task_types[{k}]"
        types.append(TaskTypeSpec(_require(t, "type_id", w), _require(t, "length", w),
                                  _require(t, "rewards", w), _require(t, "costs", w),
                                  float(t.get("dwell", 1.0)), t.get("label", "")))
    instances = []
    for k, i in enumerate(_require(data, "instances", where)):
        w = f"{where}.instances[{k}]"
        instances.append(TaskInstanceSpec(_require(i, "instance_id", w), _require(i, "type_id", w),
                                          int(i.get("start_state", 0))))
    mode = Mode.from_dict(data.get("mode", {"kind": "completion"}))
    return Scenario(_require(data, "scenario_id", where), tuple(types), tuple(instances), mode,
                    data.get("forced_first"), data.get("description", ""))


def scenario_canonical(scenario: Scenario) -> str:
    return dumps(scenario_to_dict(scenario))


def scenario_fingerprint(scenario: Scenario) -> str:
    return hashlib.sha256(scenario_canonical(scenario).encode("utf-8")).hexdigest()


def save_scenario(scenario: Scenario, path: str | os.PathLike) -> None:
    _write_text(path, scenario_canonical(scenario))


def load_scenario(path: str | os.PathLike) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return scenario_from_dict(data)


# --- traces --------------------------------------------------------------------


def _state_to_dict(s: EnvState, ids: tuple[str, ...]) -> dict:
    return {
        "progress": list(s.progress),
        "active": None if s.active is None else ids[s.active],
        "previous": None if s.previous is None else ids[s.previous],
        "clock": s.clock,
        "budget": s.budget,
        "truncated": s.truncated,
    }


def _state_from_dict(d: dict, index: dict[str, int]) -> EnvState:
    def idx(v):
        if v is None:
            return None
        if v not in index:
            raise ValidationError(f"unknown instance id {v!r} in trace")
        return index[v]

    return EnvState(tuple(int(p) for p in d["progress"]), idx(d["active"]), idx(d["previous"]),
                    float(d["clock"]), None if d["budget"] is None else float(d["budget"]),
                    bool(d["truncated"]))


def record_row(k: int, rec: TransitionRecord, ids: tuple[str, ...]) -> dict:
    """The flat columns of one record."""
    if rec.level == ROOT:
        active, state, action = ids[rec.action], rec.pre.progress[rec.action], ids[rec.action]
    else:
        active, state, action = ids[rec.pre.active], rec.pre.progress[rec.pre.active], rec.action.value
    return {"step": k, "clock": rec.pre.clock, "level": rec.level, "active_instance": active,
            "state": state, "action": action, "reward": rec.reward, "duration": rec.duration,
            "exited": rec.exited}


def trace_lines(trace: Trace, ids: tuple[str, ...]) -> str:
    header = {"format_version": FORMAT_VERSION, "kind": "trace", "scenario_id": trace.scenario_id,
              "instances": list(ids), "seed": trace.seed, "total_reward": trace.total_reward,
              "initial": _state_to_dict(trace.initial, ids)}
    lines = [json.dumps(header, sort_keys=True, ensure_ascii=False)]
    for k, rec in enumerate(trace.records):
        row = record_row(k, rec, ids)
        row["pre"] = _state_to_dict(rec.pre, ids)
        row["post"] = _state_to_dict(rec.post, ids)
        lines.append(json.dumps(row, sort_keys=True, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def write_trace(trace: Trace, path: str | os.PathLike, ids: tuple[str, ...]) -> None:
    _write_text(path, trace_lines(trace, ids))


def parse_trace(text: str, where: str = "trace") -> Trace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return Trace((), "", None, 0.0, EnvState(()))
    try:
        rows = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{where}: malformed JSON line ({exc})") from exc
    header = rows[0]
    if header.get("kind") != "trace":
        raise ValidationError(f"{where}: first line must be the trace header")
    _check_version(header, where)
    ids = tuple(_require(header, "instances", where))
    index = {iid: k for k, iid in enumerate(ids)}
    records = []
    for k, row in enumerate(rows[1:]):
        w = f"{where}: record {k}"
        for col in TRACE_COLUMNS + ("pre", "post"):
            _require(row, col, w)
        if row["step"] != k:
            raise ValidationError(f"{w}: step {row['step']} out of sequence")
        level = row["level"]
        if level == ROOT:
            action: Primitive | int = index[row["action"]]
        elif level == TYPE:
            action = Primitive(row["action"])
        else:
            raise ValidationError(f"{w}: unknown level {level!r}")
        records.append(TransitionRecord(_state_from_dict(row["pre"], index), level, action,
                                        float(row["reward"]), float(row["duration"]),
                                        _state_from_dict(row["post"], index), bool(row["exited"])))
    trace = Trace(tuple(records), header["scenario_id"], header.get("seed"),
                  float(header["total_reward"]), _state_from_dict(header["initial"], index))
    return trace.validate()


def read_trace(path: str | os.PathLike) -> Trace:
    return parse_trace(Path(path).read_text(encoding="utf-8"), str(path))


def trace_csv(trace: Trace, ids: tuple[str, ...]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for k, rec in enumerate(trace.records):
        writer.writerow(record_row(k, rec, ids))
    return buf.getvalue()


def write_trace_csv(trace: Trace, path: str | os.PathLike, ids: tuple[str, ...]) -> None:
    _write_text(path, trace_csv(trace, ids))


# --- policy snapshots ------------------------------------------------------------


def _action_key(a) -> str:
    return a.value if isinstance(a, Primitive) else str(a)


def _action_from_key(k: str):
    return CONTINUE if k == CONTINUE.value else int(k)


def policy_to_dict(policy: HierarchicalPolicy | FlatPolicy) -> dict:
    common = {
        "format_version": FORMAT_VERSION,
        "scenario_id": policy.scenario.scenario_id,
        "scenario_fingerprint": scenario_fingerprint(policy.scenario),
        "config": policy.config.to_dict(),
        "params": None if policy.params is None else policy.params.to_dict(),
        "free_first_selection": policy.free_first_selection,
        "returns": list(policy.returns),
    }
    if isinstance(policy, HierarchicalPolicy):
        root = [{"progress": list(p), "prev": prev, "values": {str(j): v for j, v in row.items()}}
                for (p, prev), row in sorted(policy.root.values.items(), key=_root_sort_key)]
        types = {tid: {"values": [list(r) for r in t.values], "visited": sorted(map(list, t.visited))}
                 for tid, t in policy.type_tables.items()}
        return {**common, "kind": "hrl", "type_tables": types, "root": root}
    table = [{"active": active, "progress": list(p),
              "values": {_action_key(a): v for a, v in row.items()}}
             for (active, p), row in sorted(policy.table.items(), key=_flat_sort_key)]
    return {**common, "kind": "flat", "table": table}


def _root_sort_key(item):
    (p, prev), _ = item
    return (p, -2 if prev is None else prev)


def _flat_sort_key(item):
    (active, p), _ = item
    return (-1 if active is None else active, p)


def policy_from_dict(data: dict, scenario: Scenario) -> HierarchicalPolicy | FlatPolicy:
    where = "policy snapshot"
    _check_version(data, where)
    if data.get("scenario_fingerprint") != scenario_fingerprint(scenario):
        raise ValidationError(f"{where}: scenario fingerprint does not match "
                              f"scenario {scenario.scenario_id!r}")
    config = LearningConfig(**data["config"])
    params = None if data.get("params") is None else ParamSet.from_dict(data["params"])
    free = bool(data.get("free_first_selection", False))
    kind = _require(data, "kind", where)
    if kind == "hrl":
        tables = {}
        for t in scenario.task_types:
            entry = data["type_tables"][t.type_id]
            table = TypeQTable(t.type_id, t.length)
            table.values = [[float(c), float(l)] for c, l in entry["values"]]
            table.visited = {(int(s), int(a)) for s, a in entry["visited"]}
            tables[t.type_id] = table
        root = RootQTable()
        for e in data["root"]:
            root.values[(tuple(e["progress"]), e["prev"])] = {int(j): float(v)
                                                              for j, v in e["values"].items()}
        policy = HierarchicalPolicy(scenario, config, tables, root, params, free_first_selection=free)
    elif kind == "flat":
        policy = FlatPolicy(scenario, config, params=params, free_first_selection=free)
        for e in data["table"]:
            policy.table[(e["active"], tuple(e["progress"]))] = {
                _action_from_key(a): float(v) for a, v in e["values"].items()}
    else:
        raise ValidationError(f"{where}: unknown policy kind {kind!r}")
    policy.returns = [float(r) for r in data.get("returns", [])]
    return policy


def save_policy(policy: HierarchicalPolicy | FlatPolicy, path: str | os.PathLike) -> None:
    _write_text(path, dumps(policy_to_dict(policy)))


def load_policy(path: str | os.PathLike, scenario: Scenario) -> HierarchicalPolicy | FlatPolicy:
    return policy_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), scenario)


# --- tables ----------------------------------------------------------------------


def curve_csv(columns: dict[str, list]) -> str:
    """CSV with one column per key, rows aligned by position."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    writer.writerow(names)
    for row in zip(*(columns[n] for n in names)):
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_text(path: str | os.PathLike, text: str) -> None:
    _write_text(path, text)
