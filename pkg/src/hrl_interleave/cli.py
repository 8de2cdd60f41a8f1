"""Command-line interface: ``hrl-interleave <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import MyopicPolicy, RandomPolicy
from .environment import TaskEnvironment
from .evaluation import (asymptote, episodes_to_fraction, evaluate, learning_curve)
from .fitting import FitConfig, fit_participant
from .flat_agent import train_flat
from .hrl_agent import LearningConfig, distinct_entries, train
from .scenarios import BUILTIN_NAMES, COMPARISON_GAMMA_T, Mode, Scenario, builtin_scenario
from .serialization import (curve_csv, dumps, load_policy, load_scenario, read_trace, save_policy,
                            write_text, write_trace)
from .task_model import ValidationError

logger = logging.getLogger("hrl_interleave")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def resolve_scenario(name_or_path: str) -> Scenario:
    """A builtin scenario name or the path of a scenario file."""
    if name_or_path in BUILTIN_NAMES:
        return builtin_scenario(name_or_path)
    path = Path(name_or_path)
    if not path.is_file():
        raise ValidationError(f"{name_or_path!r} is neither a builtin scenario "
                              f"({', '.join(BUILTIN_NAMES)}) nor a scenario file")
    return load_scenario(path)


def _learning(args, seed: int) -> LearningConfig:
    return LearningConfig(episodes=args.episodes, alpha=args.alpha, gamma_t=args.gamma_t,
                          gamma_r=args.gamma_r, seed=seed)


def _train_agent(kind: str, scenario: Scenario, config: LearningConfig, free_first: bool):
    trainer = train if kind == "hrl" else train_flat
    return trainer(scenario, config, free_first_selection=free_first)


def _policy(args, scenario: Scenario):
    if args.policy == "myopic":
        return MyopicPolicy()
    if args.policy == "random":
        return RandomPolicy(args.seed)
    if args.policy_file:
        return load_policy(args.policy_file, scenario)
    logger.info("no --policy-file given; training a %s agent with seed %d", args.policy, args.seed)
    return _train_agent(args.policy, scenario, _learning(args, args.seed), args.free_first_selection)


# --- commands --------------------------------------------------------------------


def cmd_simulate(args) -> None:
    scenario = resolve_scenario(args.scenario)
    policy = _policy(args, scenario)
    free_first = getattr(policy, "free_first_selection", args.free_first_selection)
    env = TaskEnvironment(scenario, getattr(policy, "params", None), free_first)
    mode = Mode.parse(args.mode) if args.mode else None
    trace = env.rollout(policy, env.reset(mode, seed=args.seed), seed=args.seed)
    write_trace(trace, args.out, env.ids)
    print(f"{len(trace.records)} records, total reward {trace.total_reward:.6g} -> {args.out}")


def cmd_train(args) -> None:
    scenario = resolve_scenario(args.scenario)
    if args.runs < 1:
        raise ValidationError("--runs must be >= 1")
    policies = [_train_agent(args.agent, scenario, _learning(args, args.seed + k),
                             args.free_first_selection) for k in range(args.runs)]
    save_policy(policies[0], args.out)
    if args.curve:
        mean, std = learning_curve([p.returns for p in policies])
        columns = {"episode": list(range(len(mean))), "mean": mean.tolist(), "std": std.tolist()}
        for k, p in enumerate(policies):
            columns[f"run_{k}"] = list(p.returns)
        write_text(args.curve, curve_csv(columns))
    last = np.mean([p.returns[-1] for p in policies])
    print(f"trained {args.runs} {args.agent} run(s); mean final return {last:.6g} -> {args.out}")


def _trace_files(directory: str) -> list[Path]:
    path = Path(directory)
    if not path.is_dir():
        raise ValidationError(f"--traces {directory!r} is not a directory")
    files = sorted(path.glob("*.jsonl"))
    if not files:
        raise ValidationError(f"no *.jsonl trace files in {directory!r}")
    return files


def cmd_fit(args) -> None:
    scenario = resolve_scenario(args.scenario)
    trials = [read_trace(f) for f in _trace_files(args.traces)]
    if any(t.scenario_id != scenario.scenario_id for t in trials):
        raise ValidationError("trace scenario ids do not match the scenario")
    train_trials, test_trial = (trials[:-1], trials[-1]) if len(trials) > 1 else (trials, None)
    weights = tuple(float(w) for w in args.weights.split(","))
    config = FitConfig(iterations=args.iterations, trainings_per_eval=args.trainings,
                       weights=weights, initial_design=min(args.initial_design, args.iterations),
                       learning=LearningConfig(episodes=args.episodes), seed=args.seed)
    result = fit_participant(train_trials, test_trial, scenario, config)
    write_text(args.out, dumps(result.to_dict()))
    print(f"best discrepancy {result.best_discrepancy:.6g}, train fraction "
          f"{result.train_fraction:.3f}, test fraction {result.test_fraction} -> {args.out}")


def cmd_eval(args) -> None:
    scenario = resolve_scenario(args.scenario)
    if not args.policy_file and args.policy not in ("myopic", "random"):
        raise ValidationError("eval needs --policy-file or --policy myopic|random")
    policy = _policy(args, scenario)
    env = TaskEnvironment(scenario, getattr(policy, "params", None),
                          getattr(policy, "free_first_selection", args.free_first_selection))
    references = [read_trace(p) for p in args.reference]
    report = evaluate(references, policy, env, seed=args.seed)
    write_text(args.out, report.to_json())
    print(f"next {report.next_task_accuracy}, leave {report.leave_accuracy}, "
          f"continue {report.continue_accuracy} -> {args.out}")


def cmd_compare_flat(args) -> None:
    scenario = resolve_scenario(args.scenario)
    curves, summary = {}, {}
    for kind in ("hrl", "flat"):
        policies = [_train_agent(kind, scenario, _learning(args, args.seed + k),
                                 args.free_first_selection) for k in range(args.runs)]
        mean, std = learning_curve([p.returns for p in policies])
        curves[f"{kind}_mean"], curves[f"{kind}_std"] = mean.tolist(), std.tolist()
        entries = ([sum(distinct_entries(p)) for p in policies] if kind == "hrl"
                   else [p.entries() for p in policies])
        summary[kind] = {"asymptote": asymptote(mean), "episodes_to_90": episodes_to_fraction(mean),
                         "mean_entries": float(np.mean(entries))}
    write_text(args.out, curve_csv({"episode": list(range(args.episodes)), **curves}))
    summary["entry_ratio"] = summary["flat"]["mean_entries"] / summary["hrl"]["mean_entries"]
    if args.summary:
        write_text(args.summary, dumps(summary))
    print(json.dumps(summary, sort_keys=True))


# --- parser ----------------------------------------------------------------------


def _add_learning(p: argparse.ArgumentParser, gamma_t: float = 0.9) -> None:
    p.add_argument("--episodes", type=int, default=250)
    p.add_argument("--gamma-t", type=float, default=gamma_t)
    p.add_argument("--gamma-r", type=float, default=0.99)
    p.add_argument("--alpha", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrl-interleave",
                                     description="Hierarchical RL model of task interleaving.")
    parser.add_argument("--log-level", default="WARNING")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True,
                        help=f"builtin name ({', '.join(BUILTIN_NAMES)}) or scenario file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--free-first-selection", action="store_true",
                        help="do not charge the resumption cost of the first selection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="roll out one episode")
    p.add_argument("--policy", choices=("hrl", "flat", "myopic", "random"), required=True)
    p.add_argument("--policy-file")
    p.add_argument("--mode", help="completion or budget=B (default: the scenario's own mode)")
    p.add_argument("--out", required=True)
    _add_learning(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="train agents, save a policy snapshot")
    p.add_argument("--agent", choices=("hrl", "flat"), default="hrl")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    _add_learning(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit", parents=[common], help="fit parameters to a participant's traces")
    p.add_argument("--traces", required=True, help="directory of *.jsonl traces; the last "
                                                   "(by name) is held out when there are several")
    p.add_argument("--iterations", type=int, default=60)
    p.add_argument("--trainings", type=int, default=10)
    p.add_argument("--weights", default="100")
    p.add_argument("--initial-design", type=int, default=10)
    p.add_argument("--episodes", type=int, default=250)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="score a policy against reference traces")
    p.add_argument("--reference", required=True, nargs="+")
    p.add_argument("--policy-file")
    p.add_argument("--policy", choices=("hrl", "flat", "myopic", "random"), default="hrl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare-flat", parents=[common], help="HRL vs flat learning curves")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--summary")
    _add_learning(p, gamma_t=COMPARISON_GAMMA_T)
    p.set_defaults(func=cmd_compare_flat)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
