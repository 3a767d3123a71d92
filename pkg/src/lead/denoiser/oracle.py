"""Closed-form denoiser for :class:`~lead.synthetic.SyntheticMixtureTask`.

The latent row of residue ``i`` is ``[r_0 .. r_{C-1}, onehot(s_i^t), x_i^t,
rotvec(O_i^t)]`` where ``r`` are the design-level component responsibilities.
Decoding turns these sufficient statistics into the posterior parameters.
Responsibilities use the type and coordinate likelihoods; orientations are
not scored because component rotations enter only through the decoded mean.
"""
from __future__ import annotations

import numpy as np

from .. import so3
from ..diffusion import N_TYPES, CdrState, ComplexContext
from ..schedule import NoiseSchedule
from ..synthetic import SyntheticMixtureTask
from .base import (Denoiser, DenoiserOutput, LatentCode, categorical_posterior,
                   gaussian_posterior_mean, normalize_rows, rotation_posterior_mean)


class OracleDenoiser(Denoiser):

    def __init__(self, task: SyntheticMixtureTask, sched: NoiseSchedule):
        self.task = task
        self.sched = sched
        self.n_comp = task.n_components
        self.latent_dim = self.n_comp + N_TYPES + 6
        self._type_probs = task.type_probs()
        self._centers = np.asarray(task.centers, dtype=float)
        self._rotvecs = np.asarray(task.rotvecs, dtype=float)
        self._log_w = np.log(np.asarray(task.weights, dtype=float))

    def _split(self, values):
        c = self.n_comp
        return (values[..., :c], values[..., c:c + N_TYPES],
                values[..., c + N_TYPES:c + N_TYPES + 3], values[..., c + N_TYPES + 3:])

    def responsibilities(self, a_t: CdrState, t: int) -> np.ndarray:
        """Posterior component probabilities ``(..., C)`` given ``A^t``."""
        ab = self.sched.alpha_bar_at(t)
        tau2 = self.task.tau ** 2
        var = ab * tau2 + (1.0 - ab)
        # gather p_c,i(s_i^t) without python loops
        idx = np.broadcast_to(a_t.types[..., None, :], a_t.types.shape[:-1] + (self.n_comp, a_t.m))
        tp = np.broadcast_to(self._type_probs, idx.shape + (N_TYPES,))
        p_obs = np.take_along_axis(tp, idx[..., None], axis=-1)[..., 0]
        log_seq = np.log(ab * p_obs + (1.0 - ab) / N_TYPES).sum(-1)
        diff = a_t.coords[..., None, :, :] - np.sqrt(ab) * self._centers
        log_x = -0.5 * (diff ** 2).sum((-1, -2)) / var
        logits = self._log_w + log_seq + log_x
        logits -= logits.max(-1, keepdims=True)
        r = np.exp(logits)
        return r / r.sum(-1, keepdims=True)

    def encode(self, a_t: CdrState, ctx: ComplexContext, t: int) -> LatentCode:
        if ctx is not None:
            ctx.check_pair(a_t)
        if a_t.m != self.task.m:
            raise ValueError(f"oracle expects m={self.task.m}, got {a_t.m}")
        r = self.responsibilities(a_t, t)
        rows = [np.broadcast_to(r[..., None, :], a_t.types.shape + (self.n_comp,)),
                np.eye(N_TYPES)[a_t.types], a_t.coords, so3.to_rotvec(a_t.orients)]
        return LatentCode(np.concatenate(rows, axis=-1), t)

    def decode(self, z: LatentCode, t: int) -> DenoiserOutput:
        r, obs, x_t, v_t = self._split(z.values)
        r = normalize_rows(r)
        obs = normalize_rows(obs)
        sched = self.sched
        ab = sched.alpha_bar_at(t)
        # belief over clean types, mixed over components: (..., m, 20)
        per_comp = self._type_probs * (ab * obs[..., None, :, :] + (1.0 - ab) / N_TYPES)
        per_comp = normalize_rows(per_comp)
        rc = np.moveaxis(r, -1, -2)[..., None]          # (..., C, m, 1)
        x0_types = (rc * per_comp).sum(-3)
        seq_probs = categorical_posterior(obs, x0_types, sched, t)

        tau2 = self.task.tau ** 2
        gain = np.sqrt(ab) * tau2 / (ab * tau2 + 1.0 - ab)
        x0_comp = self._centers + gain * (x_t[..., None, :, :] - np.sqrt(ab) * self._centers)
        x0_hat = (rc * x0_comp).sum(-3)
        coord_means = gaussian_posterior_mean(x0_hat, x_t, sched, t)

        v0_hat = (rc * self._rotvecs).sum(-3)
        orient_means = rotation_posterior_mean(v0_hat, so3.from_rotvec(v_t), sched, t)
        return DenoiserOutput(seq_probs, coord_means, orient_means)
