"""
Watching the change statistic on one simulated run
==================================================

A two-state hidden Markov model switches, at a random time, to a
three-state one. We simulate a single run, filter it, and look at how the
posterior probability of "already changed" evolves around the change.
"""

import numpy as np

from hmmqcd import build_augmented
from hmmqcd.detector import outcome_from_trace
from hmmqcd.scenarios import illustrative_model
from hmmqcd.simulate import sample_trajectory

# The model: scalar Gaussian observations, means 0.5/1 before and
# 0.5/1/0.75 after, unit variance, change hazard 0.0005 per step.
aug = build_augmented(illustrative_model())
print("augmented transition matrix (columns sum to one):")
print(np.array2string(aug.a, precision=4, suppress_small=True))

# One run of 10^4 steps. The seed pins the whole run.
traj = sample_trajectory(aug, 10_000, 7)
print("change time nu =", traj.nu)

# Stop the first time the statistic exceeds 0.7.
out = outcome_from_trace(traj.m2, 0.7, traj.nu, 10_000)
print(f"alarm tau = {out.tau}, delay = {out.delay}, false alarm = {out.false_alarm}")

# The statistic around the change, every 50 steps.
if traj.nu is not None:
    lo, hi = max(0, traj.nu - 200), min(traj.m2.size, traj.nu + 600)
    for k in range(lo, hi, 50):
        print(f"k={k:6d}  M2={traj.m2[k]:.4f}")
