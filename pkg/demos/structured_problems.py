"""
Four structured detection problems as augmented chains
======================================================

Periodic data, a target moving through a sensor field, a change spreading
along a line of sensors, and a change hitting an unknown subset of
streams all compile to the same model type, so the same filter and
stopping rule apply.
"""

import numpy as np

from hmmqcd import Gaussian, build_augmented, filter_run
from hmmqcd.problems import (MovingTargetSpec, MultistreamSpec, PeriodicSpec, SensorArraySpec, build,
                             subset_of_state)
from hmmqcd.simulate import sample_trajectory

rng = np.random.default_rng(0)

specs = {
    # a period-3 pattern that turns into a period-2 one
    "periodic": PeriodicSpec([Gaussian(0), Gaussian(1), Gaussian(2)], [Gaussian(3), Gaussian(-1)],
                             p_g=[1.0, 0.0], rho=0.005),
    # three sensors, the target wanders between them once it appears
    "moving target": MovingTargetSpec([Gaussian(0)] * 3, [Gaussian(1.5)] * 3, p_l=[1 / 3] * 3,
                                      a_target=np.full((3, 3), 1 / 3), rho=0.005),
    # the change reaches sensor m+1 with probability 0.05 per step once sensor m is affected
    "sensor array": SensorArraySpec([Gaussian(0)] * 4, [Gaussian(1)] * 4, rho=0.005, rho_chain=[0.05] * 3),
    # any nonempty subset of three streams may be affected
    "multistream": MultistreamSpec([Gaussian(0)] * 3, [Gaussian(1)] * 3,
                                   p_subset={i: 1 / 7 for i in range(1, 8)}, rho=0.005),
}

for name, spec in specs.items():
    aug = build_augmented(build(spec))
    traj = sample_trajectory(aug, 2000, rng)
    m2 = traj.m2
    tau = int(np.argmax(m2 > 0.9)) if np.any(m2 > 0.9) else None
    print(f"{name:>14}: N={aug.n}, change at {traj.nu}, alarm (h=0.9) at {tau}")

# Which subset does the filter believe is affected? Read the post-change
# part of the final belief for the multistream model.
aug = build_augmented(build(specs["multistream"]))
traj = sample_trajectory(aug, 1500, 3)
z = filter_run(aug, traj.y, keep=False)[-1].z
post = z[1:] / z[1:].sum()
best = int(np.argmax(post)) + 1
true = int(traj.states[-1])
print("most likely affected streams:", sorted(subset_of_state(best, 3)), f"(p={post[best - 1]:.3f})")
if true > 0:
    print("true affected streams:      ", sorted(subset_of_state(true, 3)))
