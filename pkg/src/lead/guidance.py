"""Black-box guidance in the denoiser's shared latent space.

At a guided step the encoder output ``Z`` is perturbed ``K`` times as
``Z + sigma * delta_k`` (``delta_k ~ N(0, I)``), each perturbation is decoded
deterministically and scored, and a noise ``delta_*`` is chosen:

* ``H``   hard selection, the best-scoring ``delta_k``
* ``S``   soft selection, ``delta_k`` drawn with probability softmax(rewards)
* ``W``   reward-weighted update ``Z + (1 / (sigma K)) sum_k delta_k r_k``
* ``W+H`` / ``W+S``  the better of the H/S noise and the weighted direction,
  which costs two extra evaluator calls per step

``guideraw_H`` / ``guideraw_S`` instead select among ``K`` stochastic
raw-space DDPM candidates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser.base import LatentCode
from .diffusion import CdrState, ComplexContext, check_output, ddim_step, ddpm_step, sample_posterior
from .evaluators.base import EvaluatorError
from .schedule import NoiseSchedule

STRATEGIES = ("none", "H", "S", "W", "W+H", "W+S", "guideraw_H", "guideraw_S")
SIGMA_POLICIES = ("beta_t", "sqrt_beta_t")
LATENT_STRATEGIES = ("H", "S", "W", "W+H", "W+S")


class GuidanceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance hyperparameters.

    A numeric ``sigma`` is used at every guided step. With ``sigma=None`` the
    scale follows ``sigma_policy``: ``beta_t`` (the default) or
    ``sqrt_beta_t``, which matches the standard deviation of a DDPM step.
    """

    K: int = 20
    sigma: float | None = None
    T_init: int = 50
    strategy: str = "H"
    seed: int = 0
    sigma_policy: str = "beta_t"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.T_init < 0:
            raise ValueError("T_init must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.sigma_policy not in SIGMA_POLICIES:
            raise ValueError(f"unknown sigma_policy {self.sigma_policy!r}")

    def sigma_at(self, sched: NoiseSchedule, t: int) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        b = sched.beta_at(t)
        return float(np.sqrt(b)) if self.sigma_policy == "sqrt_beta_t" else float(b)

    def queries_per_step(self) -> int:
        if self.strategy == "none":
            return 0
        return self.K + 2 if self.strategy in ("W+H", "W+S") else self.K

    def budget(self) -> int:
        """Evaluator calls per design."""
        return self.queries_per_step() * self.T_init


@dataclass
class PerturbationBatch:
    deltas: np.ndarray
    rewards: np.ndarray
    decoded: list[CdrState]

    def __post_init__(self):
        if not len(self.deltas) == len(self.rewards) == len(self.decoded):
            raise ValueError("batch arrays must share length K")

    @property
    def K(self) -> int:
        return len(self.rewards)


@dataclass
class StepRecord:
    """What a guided step saw and chose; collected when a trace list is passed."""

    t: int
    strategy: str
    sigma: float
    rewards: np.ndarray
    index: int | None = None
    selected_reward: float | None = None
    extra: dict = field(default_factory=dict)


def _score_all(f, states) -> np.ndarray:
    rewards = np.empty(len(states))
    for k, s in enumerate(states):
        try:
            rewards[k] = f.evaluate(s)
        except Exception as exc:
            raise EvaluatorError(f"evaluator failed on candidate {k}: {exc}") from exc
    return rewards


def _unbatch(state: CdrState) -> list[CdrState]:
    return [state[k] for k in range(state.batch_shape[0])]


def perturb_and_evaluate(z: LatentCode, den, f, cfg: GuidanceConfig, sched: NoiseSchedule,
                         t: int, rng: np.random.Generator,
                         sigma: float | None = None) -> PerturbationBatch:
    """Decode and score ``K`` Gaussian perturbations of ``z`` (in index order)."""
    sigma = cfg.sigma_at(sched, t) if sigma is None else sigma
    deltas = rng.standard_normal((cfg.K,) + z.values.shape)
    batch_z = LatentCode(z.values + sigma * deltas, t)
    decoded = _unbatch(ddim_step(batch_z, den, sched, t))
    return PerturbationBatch(deltas, _score_all(f, decoded), decoded)


def _check_rewards(rewards) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("empty batch")
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    return r


def weighted_direction(batch: PerturbationBatch, sigma: float) -> np.ndarray:
    """``(1 / (sigma K)) sum_k delta_k r_k``, the Monte-Carlo gradient estimate."""
    if sigma == 0:
        raise ValueError("weighted update needs sigma > 0")
    r = _check_rewards(batch.rewards)
    return np.tensordot(r, batch.deltas, axes=1) / (sigma * batch.K)


def weighted_update(z: LatentCode, batch: PerturbationBatch, sigma: float) -> LatentCode:
    return LatentCode(z.values + weighted_direction(batch, sigma), z.t)


def softmax_probs(rewards) -> np.ndarray:
    r = _check_rewards(rewards)
    e = np.exp(r - r.max())
    return e / e.sum()


def soft_select(batch: PerturbationBatch, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    p = softmax_probs(batch.rewards)
    idx = int(rng.choice(len(p), p=p))
    return batch.deltas[idx], idx


def hard_select(batch: PerturbationBatch) -> tuple[np.ndarray, int]:
    r = _check_rewards(batch.rewards)
    idx = int(np.argmax(r))
    return batch.deltas[idx], idx


@dataclass
class Selection:
    delta: np.ndarray
    index: int
    reward: float
    candidate_rewards: np.ndarray


def combined_select(z: LatentCode, batch: PerturbationBatch, sigma: float, den, f,
                    sched: NoiseSchedule, t: int, mode: str,
                    rng: np.random.Generator) -> Selection:
    """Pick between the H/S noise (index 0) and the weighted direction (index 1)."""
    if mode not in ("W+H", "W+S"):
        raise ValueError(f"mode must be 'W+H' or 'W+S', got {mode!r}")
    zeta1 = hard_select(batch)[0] if mode == "W+H" else soft_select(batch, rng)[0]
    zeta2 = weighted_direction(batch, sigma)
    cand = np.stack([zeta1, zeta2])
    states = _unbatch(ddim_step(LatentCode(z.values + sigma * cand, t), den, sched, t))
    rewards = _score_all(f, states)
    idx = int(np.argmax(rewards))
    return Selection(cand[idx], idx, float(rewards[idx]), rewards)


def guided_step(a_t: CdrState, ctx: ComplexContext, den, f, cfg: GuidanceConfig,
                sched: NoiseSchedule, rng: np.random.Generator,
                trace: list | None = None) -> CdrState:
    """One guided reverse step from ``a_t.t`` to ``a_t.t - 1``."""
    t = a_t.t
    if cfg.strategy == "none":
        return ddpm_step(a_t, ctx, den, sched, rng)
    if cfg.strategy.startswith("guideraw"):
        return guideraw_step(a_t, ctx, den, f, cfg.K, sched, rng,
                             mode=cfg.strategy[-1], trace=trace)
    z = den.encode(a_t, ctx, t)
    sigma = cfg.sigma_at(sched, t)
    batch = perturb_and_evaluate(z, den, f, cfg, sched, t, rng, sigma)
    record = StepRecord(t, cfg.strategy, sigma, batch.rewards)
    if cfg.strategy == "W":
        out = ddim_step(weighted_update(z, batch, sigma), den, sched, t)
    else:
        if cfg.strategy == "H":
            delta, idx = hard_select(batch)
            record.index, record.selected_reward = idx, float(batch.rewards[idx])
        elif cfg.strategy == "S":
            delta, idx = soft_select(batch, rng)
            record.index, record.selected_reward = idx, float(batch.rewards[idx])
        else:
            sel = combined_select(z, batch, sigma, den, f, sched, t, cfg.strategy, rng)
            delta = sel.delta
            record.index, record.selected_reward = sel.index, sel.reward
            record.extra["candidate_rewards"] = sel.candidate_rewards
        out = ddim_step(z.shifted(delta, sigma), den, sched, t)
    if trace is not None:
        trace.append(record)
    return out


def guideraw_step(a_t: CdrState, ctx: ComplexContext, den, f, K: int, sched: NoiseSchedule,
                  rng: np.random.Generator, mode: str = "H",
                  trace: list | None = None) -> CdrState:
    """Best-of-K (``H``) or softmax-sampled (``S``) raw-space DDPM candidate."""
    if K < 1:
        raise ValueError("K must be >= 1")
    t = a_t.t
    # the encoder is deterministic, so K DDPM steps share one decode
    out = den.decode(den.encode(a_t, ctx, t), t)
    check_output(out, a_t.types.shape)
    cands = _unbatch(sample_posterior(out, sched, t, rng, size=(K,)))
    rewards = _score_all(f, cands)
    if mode == "H":
        idx = int(np.argmax(rewards))
    elif mode == "S":
        idx = int(rng.choice(K, p=softmax_probs(rewards)))
    else:
        raise ValueError(f"mode must be 'H' or 'S', got {mode!r}")
    if trace is not None:
        trace.append(StepRecord(t, f"guideraw_{mode}", 0.0, rewards, idx, float(rewards[idx])))
    return cands[idx]
