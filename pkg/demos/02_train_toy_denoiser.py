"""
Training the toy denoiser
=========================

The toy network shares one encoder between three heads (types, coordinates,
orientation), which is the structure latent guidance needs. It trains in
about ten seconds on numpy.
"""

import numpy as np

from lead.denoiser import OracleDenoiser, save_checkpoint, train_toy_denoiser
from lead.diffusion import forward_state
from lead.schedule import build_schedule
from lead.synthetic import SyntheticMixtureTask, make_context

sched = build_schedule()
task = SyntheticMixtureTask()
ctx = make_context(m=task.m)
rng = np.random.default_rng(0)

data = task.sample(1500, rng)
model = train_toy_denoiser([(data[i], ctx) for i in range(1500)], sched, 20, rng)
print("validation loss per epoch:", np.round(model.history, 3))

# compare one-step predictions with the exact posterior
oracle = OracleDenoiser(task, sched)
probe = task.sample(300, np.random.default_rng(1))
for t in (5, 25, 50, 100):
    a = forward_state(probe, sched, t, rng)
    mine, exact = model(a, ctx, t), oracle(a, ctx, t)
    err = np.sqrt(np.mean((mine.coord_means - exact.coord_means) ** 2))
    tv = 0.5 * np.abs(mine.seq_probs - exact.seq_probs).sum(-1).mean()
    print(f"t={t:3d}  coordinate error {err:.3f}  type TV {tv:.4f}")

z = model.encode(a, ctx, 100)
print("latent code shape (designs, residues, d):", z.values.shape)

save_checkpoint(model, "toy_denoiser.npz")
print("saved toy_denoiser.npz; use it with --denoiser toy_denoiser.npz")
