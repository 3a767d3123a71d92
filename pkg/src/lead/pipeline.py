"""End-to-end sampling chains from the prior to ``t = 0``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3
from .diffusion import N_TYPES, CdrState, ComplexContext, ddpm_step
from .evaluators.base import Evaluator
from .evaluators.builtin import WeightedEvaluator
from .guidance import GuidanceConfig, guided_step, guideraw_step
from .metrics import DesignReport, aar, rmsd
from .schedule import NoiseSchedule


class DesignError(RuntimeError):
    """Sampling a design failed; ``t`` is the diffusion step that raised."""

    def __init__(self, message: str, t: int):
        super().__init__(message)
        self.t = t


@dataclass
class RunSpec:
    schedule: NoiseSchedule
    guidance: GuidanceConfig
    evaluator: Evaluator | None
    denoiser: object
    context: ComplexContext
    m: int
    n_designs: int = 1
    reference: CdrState | None = None
    denoiser_id: str = ""

    def __post_init__(self):
        if self.n_designs < 1:
            raise ValueError("n_designs must be >= 1")
        if self.guidance.T_init > self.schedule.T:
            raise ValueError(f"T_init={self.guidance.T_init} exceeds T={self.schedule.T}")
        if self.guidance.strategy != "none" and self.evaluator is None:
            raise ValueError("guided strategies need an evaluator")


def default_t_init(strategy: str, T: int) -> int:
    """Latent guidance starts halfway; raw-space guidance from the first step."""
    return T if strategy.startswith("guideraw") else min(50, T)


def init_prior(m: int, sched: NoiseSchedule, rng: np.random.Generator, size=()) -> CdrState:
    if m < 1:
        raise ValueError("m must be >= 1")
    shape = tuple(np.atleast_1d(size)) + (m,) if size != () else (m,)
    return CdrState(rng.integers(0, N_TYPES, shape), rng.standard_normal(shape + (3,)),
                    so3.sample_igso3_noise(1.0, rng, shape), sched.T)


def _report(spec: RunSpec, design: CdrState, queries: int) -> DesignReport:
    rewards = {}
    f = spec.evaluator
    if f is not None:
        rewards[f.name] = f.evaluate(design)
        if isinstance(f, WeightedEvaluator):
            for c in f.objective.components:
                rewards[c.evaluator.name] = c.evaluator.evaluate(design)
    rep = DesignReport(rewards=rewards, queries_used=queries)
    if spec.reference is not None:
        rep.aar = aar(design, spec.reference)
        rep.rmsd = rmsd(design, spec.reference)
    return rep


def _chain(spec: RunSpec, rng: np.random.Generator, step, trace=None):
    sched = spec.schedule
    f = spec.evaluator
    before = f.query_counter if f is not None else 0
    a = init_prior(spec.m, sched, rng)
    for t in range(sched.T, 0, -1):
        try:
            a = step(a, t)
        except Exception as exc:
            raise DesignError(f"design failed at t={t}: {exc}", t) from exc
    used = (f.query_counter - before) if f is not None else 0
    a.validate()
    return a, _report(spec, a, used)


def sample_unconditional(spec: RunSpec, rng: np.random.Generator):
    """Plain DDPM chain; never calls the evaluator while sampling."""
    def step(a, t):
        return ddpm_step(a, spec.context, spec.denoiser, spec.schedule, rng)
    return _chain(spec, rng, step)


def sample_lead(spec: RunSpec, rng: np.random.Generator, trace: list | None = None):
    """DDPM while ``t > T_init``, latent-guided DDIM steps afterwards."""
    cfg = spec.guidance

    def step(a, t):
        if t > cfg.T_init:
            return ddpm_step(a, spec.context, spec.denoiser, spec.schedule, rng)
        return guided_step(a, spec.context, spec.denoiser, spec.evaluator, cfg,
                           spec.schedule, rng, trace)
    return _chain(spec, rng, step)


def sample_guideraw(spec: RunSpec, rng: np.random.Generator, trace: list | None = None):
    """Best-of-K raw-space selection for ``t <= T_init``."""
    cfg = spec.guidance
    mode = cfg.strategy[-1] if cfg.strategy.startswith("guideraw") else "H"

    def step(a, t):
        if t > cfg.T_init:
            return ddpm_step(a, spec.context, spec.denoiser, spec.schedule, rng)
        return guideraw_step(a, spec.context, spec.denoiser, spec.evaluator, cfg.K,
                             spec.schedule, rng, mode, trace)
    return _chain(spec, rng, step)


def sample_design(spec: RunSpec, rng: np.random.Generator, trace: list | None = None):
    s = spec.guidance.strategy
    if s == "none":
        return sample_unconditional(spec, rng)
    if s.startswith("guideraw"):
        return sample_guideraw(spec, rng, trace)
    return sample_lead(spec, rng, trace)


def design_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for design ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_unconditional_batch(den, ctx: ComplexContext, sched: NoiseSchedule, m: int,
                               n: int, rng: np.random.Generator) -> CdrState:
    """Vectorized unconditional chain for ``n`` designs at once."""
    a = init_prior(m, sched, rng, size=n)
    for _ in range(sched.T):
        a = ddpm_step(a, ctx, den, sched, rng)
    return a
