"""Recover a simulated participant's parameters from their task switches.

The participant is an agent with known parameters plus spontaneous switches.
Three trials are used for fitting and the fourth is held out. The search is
shorter than the default (20 evaluations of 3 trainings) to run in about a
minute.
"""

import numpy as np

from hrl_interleave.fitting import (FitConfig, fit_participant, random_params, split_trials,
                                    synthetic_participant)
from hrl_interleave.scenarios import builtin_scenario


def show(params):
    scales = ", ".join(f"{t} {v:.2f}" for t, v in params.s_pt.items())
    return f"gamma_t {params.gamma_t:.2f}, c_p {params.c_p:.2f}, cost scales: {scales}"


def main():
    scenario = builtin_scenario("study_six_instance")
    truth = random_params(scenario.type_ids, np.random.default_rng(1))
    trials = synthetic_participant(scenario, truth, n_trials=4, seed=1)
    train_trials, test_trial = split_trials(trials)
    config = FitConfig(iterations=20, trainings_per_eval=3)
    result = fit_participant(train_trials, test_trial, scenario, config)
    print("true  ", show(truth))
    print("fitted", show(result.best_params))
    print(f"reproduced switch choices: {result.train_fraction:.2f} on fitting trials, "
          f"{result.test_fraction:.2f} on the held-out trial")


if __name__ == "__main__":
    main()
