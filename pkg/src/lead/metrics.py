"""Sequence recovery and C-alpha RMSD against a reference loop."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import CdrState


def _check(gen: CdrState, ref: CdrState) -> None:
    if gen.m != ref.m:
        raise ValueError(f"length mismatch: {gen.m} vs {ref.m}")


def aar(gen: CdrState, ref: CdrState) -> float:
    """Fraction of positions whose residue type matches the reference."""
    _check(gen, ref)
    return float(np.mean(gen.types == ref.types))


def rmsd(gen: CdrState, ref: CdrState) -> float:
    """C-alpha RMSD in the shared frame; no superposition is applied."""
    _check(gen, ref)
    return float(np.sqrt(np.mean(np.sum((gen.coords - ref.coords) ** 2, axis=-1))))


@dataclass
class DesignReport:
    aar: float | None = None
    rmsd: float | None = None
    rewards: dict[str, float] = field(default_factory=dict)
    queries_used: int = 0
    superposition: bool = False

    def __post_init__(self):
        if self.aar is not None and not 0.0 <= self.aar <= 1.0:
            raise ValueError("aar must lie in [0, 1]")
        if self.rmsd is not None and self.rmsd < 0:
            raise ValueError("rmsd must be nonnegative")
