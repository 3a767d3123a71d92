"""A two-component synthetic CDR distribution with an exactly known posterior.

Each clean design picks a component ``c`` with probability ``weights[c]``.
Given ``c``, residue ``i`` has type ``patterns[c][i]`` with probability
``peak`` (otherwise uniform over the other 19 types), coordinates
``N(centers[c, i], tau^2 I)`` and orientation exactly ``rotations[c, i]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import so3
from .diffusion import N_TYPES, CdrState, ComplexContext, encode_sequence


def _default_centers() -> np.ndarray:
    i = np.arange(6)
    arc = np.stack([1.5 * np.cos(i * np.pi / 5), 1.5 * np.sin(i * np.pi / 5), 0.3 * i - 0.75], -1)
    flipped = arc * np.array([1.0, -1.0, -1.0])
    return np.stack([arc, flipped])


def _default_rotvecs() -> np.ndarray:
    i = np.arange(6)[:, None]
    a = np.concatenate([0.3 * i, np.zeros((6, 1)), 0.8 + 0.1 * i], axis=1)
    b = np.concatenate([-0.6 - 0.1 * i, 0.5 + 0.05 * i, np.zeros((6, 1))], axis=1)
    return np.stack([a, b])


@dataclass(frozen=True)
class SyntheticMixtureTask:
    patterns: tuple[str, ...] = ("IVLFAM", "DKENRQ")
    weights: tuple[float, ...] = (0.5, 0.5)
    peak: float = 0.6
    tau: float = 0.25
    centers: np.ndarray = field(default_factory=_default_centers)
    rotvecs: np.ndarray = field(default_factory=_default_rotvecs)

    def __post_init__(self):
        m = len(self.patterns[0])
        if any(len(p) != m for p in self.patterns):
            raise ValueError("all patterns must share the loop length")
        k = len(self.patterns)
        if len(self.weights) != k or np.shape(self.centers) != (k, m, 3) \
                or np.shape(self.rotvecs) != (k, m, 3):
            raise ValueError("component parameters disagree in shape")
        if not 0 < self.peak <= 1 or self.tau <= 0:
            raise ValueError("need 0 < peak <= 1 and tau > 0")

    @property
    def m(self) -> int:
        return len(self.patterns[0])

    @property
    def n_components(self) -> int:
        return len(self.patterns)

    @property
    def rotations(self) -> np.ndarray:
        return so3.from_rotvec(self.rotvecs)

    def type_probs(self) -> np.ndarray:
        """``(components, m, 20)`` clean type distributions."""
        k, m = self.n_components, self.m
        p = np.full((k, m, N_TYPES), (1.0 - self.peak) / (N_TYPES - 1))
        for c, pat in enumerate(self.patterns):
            p[c, np.arange(m), encode_sequence(pat)] = self.peak
        return p

    def type_marginal(self) -> np.ndarray:
        """Exact per-position type marginal of clean data, ``(m, 20)``."""
        return np.einsum("c,cmk->mk", np.asarray(self.weights), self.type_probs())

    def sample(self, n: int, rng: np.random.Generator, return_components: bool = False):
        """Draw ``n`` clean designs as one batched ``CdrState``."""
        comp = rng.choice(self.n_components, size=n, p=np.asarray(self.weights))
        probs = self.type_probs()[comp]
        cum = np.cumsum(probs, axis=-1)
        u = rng.random((n, self.m, 1))
        types = np.minimum((u >= cum).sum(-1), N_TYPES - 1)
        coords = np.asarray(self.centers)[comp] + self.tau * rng.standard_normal((n, self.m, 3))
        orients = self.rotations[comp]
        state = CdrState(types, coords, orients, 0)
        return (state, comp) if return_components else state

    def mode(self, c: int) -> CdrState:
        """The most likely clean design of component ``c``."""
        return CdrState(encode_sequence(self.patterns[c]), np.asarray(self.centers)[c].copy(),
                        self.rotations[c], 0)

    def to_dict(self) -> dict:
        return {"patterns": list(self.patterns), "weights": list(self.weights),
                "peak": self.peak, "tau": self.tau,
                "centers": np.asarray(self.centers).tolist(),
                "rotvecs": np.asarray(self.rotvecs).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticMixtureTask":
        return cls(tuple(d["patterns"]), tuple(d["weights"]), d["peak"], d["tau"],
                   np.asarray(d["centers"], dtype=float), np.asarray(d["rotvecs"], dtype=float))


def make_context(n: int = 12, m: int = 6, seed: int = 7) -> ComplexContext:
    """A fixed stand-in framework/antigen context of ``n`` residues."""
    rng = np.random.default_rng(seed)
    tags = ["antigen"] * (n // 2) + ["heavy"] * (n - n // 2)
    return ComplexContext(rng.integers(0, N_TYPES, n), 3.0 * rng.standard_normal((n, 3)),
                          so3.random_rotations(rng, (n,)), tags, (n // 2, m))
