"""Likelihood-free fitting of individual parameters to behavioral traces.

A candidate ParamSet is scored by training hierarchical agents with it and
counting how many of the participant's task switches their greedy policies
fail to reproduce. A Gaussian-process surrogate over the (normalized)
parameter box proposes the next candidate by minimizing a lower confidence
bound.
"""

from __future__ import annotations

import logging
import random
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc
from sklearn.exceptions import ConvergenceWarning
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel

from .environment import (LEAVE, EnvState, Policy, TaskEnvironment, Trace,
                          switch_candidates, switch_choice)
from .evaluation import switch_events
from .hrl_agent import LearningConfig, train
from .scenarios import Scenario
from .task_model import C_P_BOUNDS, GAMMA_T_BOUNDS, S_PT_BOUNDS, ParamSet, ValidationError

logger = logging.getLogger(__name__)

# Keep proposals this far (in normalized units) from the open bounds.
_EDGE = 1e-3


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 60
    trainings_per_eval: int = 10
    weights: tuple[float, ...] = (100.0,)
    initial_design: int = 10
    kappa: float = 2.0
    candidates: int = 2000
    learning: LearningConfig = field(default_factory=LearningConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.initial_design < 1:
            raise ValidationError("initial_design must be >= 1")
        if self.iterations < self.initial_design:
            raise ValidationError(
                f"iterations ({self.iterations}) must be >= initial design size ({self.initial_design})")
        if self.trainings_per_eval < 1:
            raise ValidationError("trainings_per_eval must be >= 1")
        if not self.weights or any(not (w > 0) for w in self.weights):
            raise ValidationError("weights must be positive")

    def training_seeds(self) -> list[int]:
        # shared by every candidate: common random numbers make candidates comparable
        return [self.seed * 1000 + k for k in range(self.trainings_per_eval)]


@dataclass
class FitResult:
    best_params: ParamSet
    best_discrepancy: float
    history: list[tuple[ParamSet, float]]
    train_fraction: float
    test_fraction: float | None
    weight: float

    def to_dict(self) -> dict:
        return {
            "best_params": self.best_params.to_dict(),
            "best_discrepancy": self.best_discrepancy,
            "history": [{"params": p.to_dict(), "discrepancy": d} for p, d in self.history],
            "train_fraction": self.train_fraction,
            "test_fraction": self.test_fraction,
            "weight": self.weight,
        }


# --- objective -----------------------------------------------------------------


def reproduced_fraction(policy: Policy, trial: Trace | Sequence[tuple[EnvState, int]],
                        env: TaskEnvironment) -> float:
    """Share of the trial's switch events at which the policy picks the same instance."""
    events = switch_events(trial) if isinstance(trial, Trace) else list(trial)
    if not events:
        raise ValidationError("trial has no switch events")
    hits = sum(switch_choice(policy, env, s) == chosen for s, chosen in events)
    return hits / len(events)


def discrepancy(events: Sequence[tuple[EnvState, int]], policy: Policy, w: float,
                env: TaskEnvironment) -> float:
    """``w * (1 - reproduced fraction)`` over switch events; 0 means all reproduced."""
    if not w > 0:
        raise ValidationError(f"weight must be positive, got {w}")
    return w * (1.0 - reproduced_fraction(policy, events, env))


def param_bounds(type_ids: Sequence[str]) -> np.ndarray:
    """Open box of (gamma_t, c_p, s_pt per type), one row per dimension."""
    return np.array([GAMMA_T_BOUNDS, C_P_BOUNDS] + [S_PT_BOUNDS] * len(type_ids), float)


def params_from_unit(x: Sequence[float], type_ids: Sequence[str]) -> ParamSet:
    bounds = param_bounds(type_ids)
    x = np.clip(np.asarray(x, float), _EDGE, 1 - _EDGE)
    v = bounds[:, 0] + x * (bounds[:, 1] - bounds[:, 0])
    return ParamSet(float(v[0]), float(v[1]), {t: float(s) for t, s in zip(type_ids, v[2:])})


def params_to_unit(params: ParamSet, type_ids: Sequence[str]) -> np.ndarray:
    bounds = param_bounds(type_ids)
    v = np.array([params.gamma_t, params.c_p] + [params.s_pt[t] for t in type_ids])
    return (v - bounds[:, 0]) / (bounds[:, 1] - bounds[:, 0])


def random_params(type_ids: Sequence[str], rng: np.random.Generator) -> ParamSet:
    return params_from_unit(rng.uniform(_EDGE, 1 - _EDGE, 2 + len(type_ids)), type_ids)


def train_policies(scenario: Scenario, params: ParamSet, config: FitConfig):
    """The ``trainings_per_eval`` agents a candidate is judged by."""
    params.validate()
    return [train(scenario, replace(config.learning, seed=seed), params)
            for seed in config.training_seeds()]


def mean_fraction(policies, trials: Sequence[Trace], env: TaskEnvironment) -> float:
    """Reproduced fraction averaged over trials with switch events, then over policies."""
    usable = [switch_events(t) for t in trials]
    usable = [e for e in usable if e]
    if not usable:
        raise ValidationError("no trial contains a switch event")
    return float(np.mean([np.mean([reproduced_fraction(p, e, env) for e in usable])
                          for p in policies]))


def evaluate_params(params: ParamSet, train_trials: Sequence[Trace], scenario: Scenario,
                    config: FitConfig, w: float | None = None) -> float:
    """Mean discrepancy of freshly trained agents over the participant's training trials."""
    w = config.weights[0] if w is None else w
    policies = train_policies(scenario, params, config)
    env = TaskEnvironment(scenario, params)
    return w * (1.0 - mean_fraction(policies, train_trials, env))


# --- surrogate -----------------------------------------------------------------


def make_surrogate(dim: int, seed: int) -> GaussianProcessRegressor:
    kernel = (ConstantKernel(1.0, (1e-3, 1e3))
              * Matern(length_scale=np.full(dim, 0.3), length_scale_bounds=(1e-2, 1e2), nu=2.5)
              + WhiteKernel(1e-2, (1e-6, 1e1)))
    return GaussianProcessRegressor(kernel, normalize_y=True, n_restarts_optimizer=2,
                                    random_state=seed)


def propose(gp: GaussianProcessRegressor, dim: int, kappa: float, n_candidates: int,
            rng: np.random.Generator) -> np.ndarray:
    """Minimizer of ``mean - kappa * std`` inside the normalized box."""

    def lcb(x):
        mu, sd = gp.predict(np.atleast_2d(x), return_std=True)
        return mu - kappa * sd

    cand = rng.uniform(_EDGE, 1 - _EDGE, (n_candidates, dim))
    scores = lcb(cand)
    starts = cand[np.argsort(scores)[:3]]
    best_x, best_v = starts[0], float(scores.min())
    box = [(_EDGE, 1 - _EDGE)] * dim
    for x0 in starts:
        res = minimize(lambda x: float(lcb(x)[0]), x0, method="L-BFGS-B", bounds=box)
        if res.success and res.fun < best_v:
            best_x, best_v = res.x, float(res.fun)
    return np.clip(best_x, _EDGE, 1 - _EDGE)


def minimize_objective(objective: Callable[[np.ndarray], float], dim: int, config: FitConfig,
                       seed: int) -> list[tuple[np.ndarray, float]]:
    """Latin-hypercube start, then one surrogate-guided proposal per iteration."""
    rng = np.random.default_rng(seed)
    design = qmc.LatinHypercube(d=dim, seed=rng).random(config.initial_design)
    design = _EDGE + design * (1 - 2 * _EDGE)
    history: list[tuple[np.ndarray, float]] = [(x, objective(x)) for x in design]
    gp = None
    while len(history) < config.iterations:
        if gp is None:
            gp = make_surrogate(dim, seed)
        X = np.array([h[0] for h in history])
        y = np.array([h[1] for h in history])
        try:
            if np.ptp(y) == 0:
                raise np.linalg.LinAlgError("constant observations")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                gp.fit(X, y)
            x = propose(gp, dim, config.kappa, config.candidates, rng)
        except (np.linalg.LinAlgError, ValueError) as exc:
            logger.warning("surrogate failed (%s); falling back to a random proposal", exc)
            x = rng.uniform(_EDGE, 1 - _EDGE, dim)
        history.append((x, objective(x)))
    return history


def fit_participant(train_trials: Sequence[Trace], test_trial: Trace | None, scenario: Scenario,
                    config: FitConfig | None = None) -> FitResult:
    """Fit a ParamSet to a participant's training trials, score it on the held-out trial.

    With several weights, each runs an independent search and the result whose
    best discrepancy is lowest relative to its weight wins.
    """
    config = config or FitConfig()
    if not train_trials:
        raise ValidationError("fit_participant needs at least one training trial")
    type_ids = scenario.type_ids
    dim = 2 + len(type_ids)
    results = []
    for k, w in enumerate(config.weights):
        def objective(x, w=w):
            return evaluate_params(params_from_unit(x, type_ids), train_trials, scenario, config, w)

        history = minimize_objective(objective, dim, config, config.seed * 7919 + k)
        hist = [(params_from_unit(x, type_ids), float(d)) for x, d in history]
        best_params, best_d = min(hist, key=lambda h: h[1])
        results.append((best_d / w, w, best_params, best_d, hist))
    _, w, best_params, best_d, hist = min(results, key=lambda r: r[0])
    policies = train_policies(scenario, best_params, config)
    env = TaskEnvironment(scenario, best_params)
    train_fraction = mean_fraction(policies, train_trials, env)
    test_fraction = None
    if test_trial is not None and switch_events(test_trial):
        test_fraction = mean_fraction(policies, [test_trial], env)
    return FitResult(best_params, best_d, hist, train_fraction, test_fraction, w)


def split_trials(trials: Sequence[Trace]) -> tuple[list[Trace], Trace]:
    """Hold out the last trial for testing; the earlier ones are for fitting."""
    if len(trials) < 2:
        raise ValidationError("need at least two trials to hold one out")
    return list(trials[:-1]), trials[-1]


def best_so_far(history: Sequence[tuple[ParamSet, float]]) -> list[float]:
    return list(np.minimum.accumulate([d for _, d in history]))


class NoisyPolicy:
    """A simulated participant: a policy plus spontaneous task switches.

    With probability ``switch_rate`` at a type-level decision the participant
    leaves and moves on to the instance the wrapped policy ranks best among
    the others (when there is one). With probability ``root_epsilon`` a
    selection is uniformly random.
    """

    def __init__(self, policy: Policy, switch_rate: float, root_epsilon: float = 0.0,
                 seed: int | None = 0) -> None:
        self.policy = policy
        self.switch_rate = switch_rate
        self.root_epsilon = root_epsilon
        self.reset(seed)

    def reset(self, seed: int | None = None) -> None:
        self.rng = random.Random(seed)
        self._impulse = False

    def root_action(self, env: TaskEnvironment, state: EnvState) -> int:
        impulse, self._impulse = self._impulse, False
        if self.rng.random() < self.root_epsilon:
            available = env.available_root_actions(state)
            return available[self.rng.randrange(len(available))]
        if impulse and switch_candidates(env, state):
            return switch_choice(self.policy, env, state)
        return self.policy.root_action(env, state)

    def switch_action(self, env: TaskEnvironment, state: EnvState) -> int:
        return switch_choice(self.policy, env, state)

    def type_action(self, env: TaskEnvironment, state: EnvState):
        if self.rng.random() < self.switch_rate:
            self._impulse = True
            return LEAVE
        return self.policy.type_action(env, state)


def synthetic_participant(scenario: Scenario, params: ParamSet, n_trials: int = 4,
                          switch_rate: float = 0.2, root_epsilon: float = 0.0,
                          min_switches: int = 10, seed: int = 0,
                          learning: LearningConfig | None = None,
                          max_attempts: int = 200) -> list[Trace]:
    """Trials of a simulated participant whose true parameters are ``params``.

    One agent is trained with ``params``; each trial is a rollout of a
    :class:`NoisyPolicy` around its greedy policy under the scenario's episode
    rule. Rollouts with fewer than ``min_switches`` switch events are redrawn.
    """
    learning = replace(learning or LearningConfig(), seed=seed)
    policy = NoisyPolicy(train(scenario, learning, params), switch_rate, root_epsilon)
    env = TaskEnvironment(scenario, params)
    trials = []
    for attempt in range(max_attempts * n_trials):
        trial_seed = seed * 100_003 + attempt
        trace = env.rollout(policy, env.reset(seed=trial_seed), seed=trial_seed)
        if len(switch_events(trace)) >= min_switches:
            trials.append(trace)
            if len(trials) == n_trials:
                return trials
    raise RuntimeError(f"could not generate {n_trials} trials with {min_switches} switch events")
