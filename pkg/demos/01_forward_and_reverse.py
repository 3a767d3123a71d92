"""
Noising a loop and sampling it back
===================================

The synthetic task is a two-component mixture of six-residue loops with an
exactly known posterior. Here we noise one clean design forward and then run
the full reverse chain with the closed-form (oracle) denoiser.
"""

import numpy as np

from lead import so3
from lead.denoiser import OracleDenoiser
from lead.diffusion import forward_state
from lead.metrics import aar, rmsd
from lead.pipeline import sample_unconditional_batch
from lead.schedule import build_schedule
from lead.synthetic import SyntheticMixtureTask, make_context

sched = build_schedule()          # linear betas 1e-4 .. 0.05, T = 100
task = SyntheticMixtureTask()
ctx = make_context(m=task.m)
rng = np.random.default_rng(0)

clean = task.mode(0)
print("clean sequence", clean.sequence)

# forward: types are resampled, coordinates shrink toward the origin,
# orientations drift under isotropic rotation noise
for t in (1, 25, 50, 100):
    noisy = forward_state(clean, sched, t, rng)
    drift = so3.geodesic_distance(noisy.orients, clean.orients).mean()
    print(f"t={t:3d}  seq {noisy.sequence}  aar {aar(noisy, clean):.2f}  "
          f"rmsd {rmsd(noisy, clean):.2f}  mean rotation drift {drift:.2f} rad")

# reverse: 2000 designs from the prior, one vectorized chain
oracle = OracleDenoiser(task, sched)
designs = sample_unconditional_batch(oracle, ctx, sched, task.m, 2000, rng)

emp = np.stack([np.bincount(designs.types[:, i], minlength=20) / 2000 for i in range(task.m)])
tv = 0.5 * np.abs(emp - task.type_marginal()).sum(-1)
print("per-position total variation to the data marginal:", np.round(tv, 3))

near0 = [rmsd(designs[i], task.mode(0)) for i in range(2000)]
near1 = [rmsd(designs[i], task.mode(1)) for i in range(2000)]
print("fraction closer to component 0:", np.mean(np.less(near0, near1)))
