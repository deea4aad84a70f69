"""
Tuning the alarm threshold
==========================

The Bayes cost of the threshold rule is ``c * delay + 1{false alarm}``.
We estimate it on a grid of thresholds, then let the finite-difference
optimizer find the minimum on its own and compare.
"""

import numpy as np

from hmmqcd import OptimizerConfig, build_augmented, cost_curve, optimize_threshold
from hmmqcd.scenarios import illustrative_model

aug = build_augmented(illustrative_model())
c = 0.001

# Cost on a grid. All thresholds share the same simulated runs, which keeps
# the curve smooth.
grid = np.round(np.arange(1, 20) * 0.05, 2)
rep = cost_curve(aug, c, grid, runs_per_h=500, seed=1)
for row in rep.rows:
    bar = "#" * int(60 * row["cost"])
    print(f"h={row['h']:.2f} cost={row['cost']:.3f} +- {row['cost_se']:.3f} {bar}")
print("grid minimum at h =", grid[np.argmin(rep.column("cost"))])

# The optimizer works on phi = logit(h) so the threshold stays in (0, 1).
# Each step spends 10 runs on a central difference with step 1 in phi.
cfg = OptimizerConfig(n_steps=200, eta0=3.0, decay=1.5, delta=1.0, samples_per_eval=10, h0=0.5)
for seed in range(3):
    res = optimize_threshold(aug, c, cfg, seed=seed)
    print(f"seed {seed}: h* = {res.h_star:.3f}")
