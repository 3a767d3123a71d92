"""Noise schedules for the forward diffusion process.

Time is 1-based: ``t = 1..T`` indexes noising steps and ``t = 0`` is clean
data. Arrays are stored 0-based, so ``beta[t - 1]`` is the step-``t`` value;
use the accessor methods instead of indexing by hand.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ScheduleError(ValueError):
    """Raised for invalid schedule parameters or out-of-range time indices."""


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray
    beta_bar: np.ndarray
    kind: str = "linear"
    beta_min: float = 1e-4
    beta_max: float = 0.05

    def _check(self, t: int, allow_zero: bool = False) -> int:
        lo = 0 if allow_zero else 1
        if not lo <= t <= self.T:
            raise ScheduleError(f"time index {t} outside [{lo}, {self.T}]")
        return int(t)

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._check(t) - 1])

    def alpha_at(self, t: int) -> float:
        return 1.0 - self.beta_at(t)

    def alpha_bar_at(self, t: int) -> float:
        t = self._check(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def beta_bar_at(self, t: int) -> float:
        return 1.0 - self.alpha_bar_at(t)

    def posterior_coefficients(self, t: int) -> tuple[float, float]:
        """Weights ``(c0, ct)`` of the Gaussian posterior mean.

        ``E[x^{t-1} | x^t, x^0] = c0 * x^0 + ct * x^t``.
        """
        ab_t = self.alpha_bar_at(t)
        ab_prev = self.alpha_bar_at(t - 1)
        b_t = self.beta_at(t)
        denom = 1.0 - ab_t
        c0 = np.sqrt(ab_prev) * b_t / denom
        ct = np.sqrt(1.0 - b_t) * (1.0 - ab_prev) / denom
        return float(c0), float(ct)

    def as_dict(self) -> dict:
        return {"T": self.T, "kind": self.kind,
                "beta_min": self.beta_min, "beta_max": self.beta_max}


def build_schedule(T: int = 100, kind: str = "linear",
                   beta_min: float = 1e-4, beta_max: float = 0.05) -> NoiseSchedule:
    """Build a schedule of ``T`` steps.

    ``linear`` spaces beta evenly from ``beta_min`` to ``beta_max``. ``cosine``
    uses the squared-cosine alpha-bar curve (offset 0.008) with each beta
    clipped to ``[beta_min, beta_max]``.
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ScheduleError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ScheduleError(
            f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    if kind == "linear":
        beta = np.linspace(beta_min, beta_max, T) if T > 1 else np.array([beta_min])
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1) / T
        f = np.cos((steps + s) / (1 + s) * np.pi / 2) ** 2
        beta = np.clip(1.0 - f[1:] / f[:-1], beta_min, beta_max)
    else:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    beta = np.asarray(beta, dtype=float)
    alpha_bar = np.cumprod(1.0 - beta)
    for arr in (beta, alpha_bar):
        arr.setflags(write=False)
    beta_bar = 1.0 - alpha_bar
    beta_bar.setflags(write=False)
    return NoiseSchedule(int(T), beta, alpha_bar, beta_bar, kind,
                         float(beta_min), float(beta_max))
