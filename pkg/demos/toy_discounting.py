"""How the type-level discount changes interleaving on the writing/browsing toy.

Trains one agent per discount and prints the greedy episode as a sequence of
visits: ``W0-3`` means writing from state 0 up to state 3, then a switch.
"""

from hrl_interleave.environment import ROOT, TaskEnvironment
from hrl_interleave.hrl_agent import LearningConfig, train
from hrl_interleave.scenarios import TOY_BOUNDARY_GAMMA_T, builtin_scenario


def visits(env, trace):
    out = []
    for r in trace.records:
        if r.level == ROOT:
            i = r.action
            out.append([env.ids[i], r.post.progress[i], r.post.progress[i]])
        else:
            out[-1][2] = r.post.progress[r.pre.active]
    return " ".join(f"{iid}{a}-{b}" for iid, a, b in out)


def main():
    scenario = builtin_scenario("toy_two_task")
    env = TaskEnvironment(scenario)
    for gamma_t in (0.01, TOY_BOUNDARY_GAMMA_T, 0.95):
        policy = train(scenario, LearningConfig(gamma_t=gamma_t, seed=0))
        trace = env.rollout(policy, env.reset())
        print(f"gamma_t={gamma_t:<5} reward {trace.total_reward:6.2f}  {visits(env, trace)}")


if __name__ == "__main__":
    main()
