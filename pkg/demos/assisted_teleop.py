"""
What the assistance channels buy
================================

Two scripted A/B comparisons: pedal resistance against a wall-approach
course, and manipulability guidance on a reach that starts from an
overstretched base placement.
"""

import numpy as np

from teleosim.manipfield import default_surrogate
from teleosim.scenarios import make_scenario
from teleosim.session import (FeedbackFlags, SessionConfig, compute_metrics,
                              run_episode)

N_SEEDS = 10

wall = make_scenario("wall_approach")
pedal_on = FeedbackFlags(pedal_feedback=True, arm_reflection=False,
                         guidance=False)
rows = {}
for label, flags in (("bare", FeedbackFlags.none()), ("pedal", pedal_on)):
    coll = [compute_metrics(run_episode(SessionConfig(scenario=wall),
                                        flags=flags, seed=s)).n_coll
            for s in range(N_SEEDS)]
    rows[label] = coll
print(f"wall approach, {N_SEEDS} seeds:")
print(f"  collisions without assistance: mean {np.mean(rows['bare']):.2f}")
print(f"  collisions with pedal cue:     mean {np.mean(rows['pedal']):.2f}")

reach = make_scenario("reach_limited")
surrogate = default_surrogate(reach.chain)
guide_on = FeedbackFlags(pedal_feedback=False, arm_reflection=False,
                         guidance=True)
print(f"\nlimited reach, {N_SEEDS} seeds:")
for label, flags in (("bare", FeedbackFlags.none()), ("guided", guide_on)):
    t_done, r_low = [], []
    for s in range(N_SEEDS):
        config = SessionConfig(scenario=reach, surrogate=surrogate)
        m = compute_metrics(run_episode(config, flags=flags, seed=s))
        t_done.append(m.duration)
        r_low.append(m.r_low)
    print(f"  {label:6s} time-to-goal {np.mean(t_done):5.2f} s, "
          f"low-manipulability fraction {np.mean(r_low):.3f}")
