"""Built-in evaluators: hydropathy, synthetic quadratic, weighted sums."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import so3
from ..diffusion import ALPHABET, CdrState
from .base import Evaluator, EvaluatorError

# Kyte & Doolittle (1982) hydropathy index.
KYTE_DOOLITTLE = {
    "A": 1.8, "R": -4.5, "N": -3.5, "D": -3.5, "C": 2.5, "Q": -3.5, "E": -3.5,
    "G": -0.4, "H": -3.2, "I": 4.5, "L": 3.8, "K": -3.9, "M": 1.9, "F": 2.8,
    "P": -1.6, "S": -0.8, "T": -0.7, "W": -0.9, "Y": -1.3, "V": 4.2,
}
KD_BY_INDEX = np.array([KYTE_DOOLITTLE[c] for c in ALPHABET])


def hydropathy(a: CdrState) -> float:
    """Mean Kyte-Doolittle value of the loop sequence (lower is better)."""
    return float(KD_BY_INDEX[a.types].mean(axis=-1))


def hydropathy_reward(a: CdrState) -> float:
    return -hydropathy(a)


class HydropathyEvaluator(Evaluator):
    name = "hydro"

    def _score(self, a):
        return hydropathy_reward(a)


def synthetic_quadratic_reward(a: CdrState, target: CdrState,
                               seq_weight: float = 1.0, rot_weight: float = 1.0) -> float:
    """Negative squared distance to ``target`` over all three modalities."""
    if a.m != target.m:
        raise ValueError(f"length mismatch: {a.m} vs {target.m}")
    coord = np.sum((a.coords - target.coords) ** 2)
    seq = np.sum(a.types != target.types)
    rot = np.sum(so3.geodesic_distance(a.orients, target.orients) ** 2)
    return float(-coord - seq_weight * seq - rot_weight * rot)


class QuadraticEvaluator(Evaluator):

    def __init__(self, target: CdrState, seq_weight: float = 1.0, rot_weight: float = 1.0,
                 name: str = "quadratic"):
        super().__init__()
        self.target = target
        self.seq_weight = seq_weight
        self.rot_weight = rot_weight
        self.name = name

    def _score(self, a):
        return synthetic_quadratic_reward(a, self.target, self.seq_weight, self.rot_weight)


@dataclass
class Component:
    evaluator: Evaluator
    weight: float
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"normalizer scale must be positive, got {self.scale}")


@dataclass
class WeightedObjective:
    components: list[Component] = field(default_factory=list)

    def with_weights(self, weights) -> "WeightedObjective":
        weights = list(weights)
        if len(weights) != len(self.components):
            raise ValueError("one weight per component is required")
        return WeightedObjective([replace(c, weight=float(w))
                                  for c, w in zip(self.components, weights)])

    def normalizers(self) -> dict[str, dict[str, float]]:
        return {c.evaluator.name: {"shift": c.shift, "scale": c.scale}
                for c in self.components}


def component_values(obj: WeightedObjective, a: CdrState) -> list[float]:
    out = []
    for c in obj.components:
        try:
            out.append(c.evaluator.evaluate(a))
        except Exception as exc:
            raise EvaluatorError(f"component {c.evaluator.name!r} failed: {exc}") from exc
    return out


def weighted_reward(obj: WeightedObjective, a: CdrState) -> float:
    raw = component_values(obj, a)
    return float(sum(c.weight * (r - c.shift) / c.scale for c, r in zip(obj.components, raw)))


class WeightedEvaluator(Evaluator):
    """Scalarized multi-objective reward; one query per call regardless of components."""

    def __init__(self, objective: WeightedObjective, name: str = "weighted"):
        super().__init__()
        self.objective = objective
        self.name = name

    def _score(self, a):
        return weighted_reward(self.objective, a)


def calibrate_normalizers(obj: WeightedObjective, samples) -> WeightedObjective:
    """Z-score each component over ``samples`` (population std, floored at 1e-8)."""
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("calibration needs at least two samples")
    comps = []
    for c in obj.components:
        vals = np.array([c.evaluator.evaluate(s) for s in samples])
        comps.append(replace(c, shift=float(vals.mean()), scale=max(float(vals.std()), 1e-8)))
    return WeightedObjective(comps)
