"""Learning speed and table size of the hierarchical and flat learners.

A reduced version of the full comparison (fewer runs); the CLI equivalent is
``hrl-interleave compare-flat --scenario comparison_ten_instance``.
"""

import numpy as np

from hrl_interleave.evaluation import asymptote, episodes_to_fraction, learning_curve
from hrl_interleave.flat_agent import train_flat
from hrl_interleave.hrl_agent import LearningConfig, distinct_entries, train
from hrl_interleave.scenarios import COMPARISON_GAMMA_T, builtin_scenario

RUNS = 10


def main():
    scenario = builtin_scenario("comparison_ten_instance")
    curves = {"hrl": [], "flat": []}
    entries = {"hrl": [], "flat": []}
    for seed in range(RUNS):
        config = LearningConfig(gamma_t=COMPARISON_GAMMA_T, seed=seed)
        hrl, flat = train(scenario, config), train_flat(scenario, config)
        curves["hrl"].append(hrl.returns)
        curves["flat"].append(flat.returns)
        entries["hrl"].append(sum(distinct_entries(hrl)))
        entries["flat"].append(flat.entries())
    for kind in ("hrl", "flat"):
        mean, _ = learning_curve(curves[kind])
        print(f"{kind:>4}: asymptote {asymptote(mean):7.2f}, "
              f"90% after {episodes_to_fraction(mean, 0.9):3d} episodes, "
              f"{np.mean(entries[kind]):7.0f} table entries")


if __name__ == "__main__":
    main()
