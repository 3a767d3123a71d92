"""Shared-encoder / three-decoder denoiser contract and posterior formulas."""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .. import so3
from ..diffusion import N_TYPES, CdrState, ComplexContext
from ..schedule import NoiseSchedule


@dataclass
class LatentCode:
    """Per-residue shared embedding ``values`` of shape ``(..., m, d)``."""

    values: np.ndarray
    t: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim < 2:
            raise ValueError("latent values must be at least (m, d)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("latent code has non-finite entries")

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    @property
    def m(self) -> int:
        return self.values.shape[-2]

    def shifted(self, delta, scale: float = 1.0) -> "LatentCode":
        return LatentCode(self.values + scale * np.asarray(delta), self.t)


@dataclass
class DenoiserOutput:
    seq_probs: np.ndarray
    coord_means: np.ndarray
    orient_means: np.ndarray

    def validate(self, tol: float = 1e-9) -> None:
        p = self.seq_probs
        if p.min() < 0 or np.abs(p.sum(axis=-1) - 1).max() > tol:
            raise ValueError("seq_probs rows must be nonnegative and sum to 1")
        if not so3.is_rotation(self.orient_means, tol):
            raise ValueError("orient_means must be proper rotations")


class Denoiser(abc.ABC):
    """``f_k(A^t, R) = D_k(E(A^t, R))`` for the three modalities."""

    latent_dim: int

    @abc.abstractmethod
    def encode(self, a_t: CdrState, ctx: ComplexContext, t: int) -> LatentCode: ...

    @abc.abstractmethod
    def decode(self, z: LatentCode, t: int) -> DenoiserOutput: ...

    def __call__(self, a_t: CdrState, ctx: ComplexContext, t: int) -> DenoiserOutput:
        return self.decode(self.encode(a_t, ctx, t), t)


def normalize_rows(p: np.ndarray) -> np.ndarray:
    """Clip to nonnegative and renormalize; all-zero rows become uniform."""
    p = np.clip(p, 0.0, None)
    s = p.sum(axis=-1, keepdims=True)
    k = p.shape[-1]
    return np.where(s > 0, p / np.where(s > 0, s, 1.0), 1.0 / k)


def categorical_posterior(obs: np.ndarray, x0_probs: np.ndarray,
                          sched: NoiseSchedule, t: int) -> np.ndarray:
    """Posterior over ``s^{t-1}`` given the observed type distribution at ``t``.

    ``obs`` is the (one-hot or soft) observation of ``s^t``; ``x0_probs`` the
    belief over ``s^0``. Both have a trailing axis of 20.
    """
    a_t, b_t = sched.alpha_at(t), sched.beta_at(t)
    ab_prev = sched.alpha_bar_at(t - 1)
    ab_t = sched.alpha_bar_at(t)
    like = a_t * obs + b_t / N_TYPES                      # q(s^t | s^{t-1}=k)
    norm = ab_t * obs + (1.0 - ab_t) / N_TYPES            # q(s^t | s^0=j)
    w = x0_probs / norm
    prior = ab_prev * w + (1.0 - ab_prev) / N_TYPES * w.sum(axis=-1, keepdims=True)
    return normalize_rows(like * prior)


def gaussian_posterior_mean(x0_hat: np.ndarray, x_t: np.ndarray,
                            sched: NoiseSchedule, t: int) -> np.ndarray:
    c0, ct = sched.posterior_coefficients(t)
    return c0 * x0_hat + ct * x_t


def rotation_posterior_mean(v0_hat: np.ndarray, o_t: np.ndarray,
                            sched: NoiseSchedule, t: int) -> np.ndarray:
    """Posterior mean rotation, combining rotation vectors like the Gaussian case.

    ``v0_hat`` is the estimated clean rotation vector, ``o_t`` the noisy
    rotation matrix.
    """
    c0, ct = sched.posterior_coefficients(t)
    return so3.from_rotvec(c0 * v0_hat + ct * so3.to_rotvec(o_t))
