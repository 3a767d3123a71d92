"""CDR state containers, forward noising and one-step reverse transitions.

States may carry leading batch axes: ``types`` is ``(..., m)``, ``coords``
``(..., m, 3)`` and ``orients`` ``(..., m, 3, 3)``. All reverse steps go
through ``den.encode`` followed by ``den.decode`` so the latent code is the
only path from a noisy state to the posterior parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .schedule import NoiseSchedule, ScheduleError

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
N_TYPES = len(ALPHABET)
_INDEX = {c: i for i, c in enumerate(ALPHABET)}


class ContractViolation(RuntimeError):
    """A denoiser returned something that breaks the output contract."""


def encode_sequence(seq: str) -> np.ndarray:
    try:
        return np.array([_INDEX[c] for c in seq.upper()], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"unknown amino-acid code {exc.args[0]!r}") from None


def decode_sequence(types) -> str:
    return "".join(ALPHABET[int(i)] for i in np.asarray(types).ravel())


@dataclass
class CdrState:
    types: np.ndarray
    coords: np.ndarray
    orients: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.types = np.asarray(self.types, dtype=np.int64)
        self.coords = np.asarray(self.coords, dtype=float)
        self.orients = np.asarray(self.orients, dtype=float)
        shape = self.types.shape
        if len(shape) < 1 or shape[-1] < 1:
            raise ValueError("a CDR state needs at least one residue")
        if self.coords.shape != shape + (3,) or self.orients.shape != shape + (3, 3):
            raise ValueError(
                f"inconsistent shapes: types {shape}, coords {self.coords.shape}, "
                f"orients {self.orients.shape}")
        if self.types.min() < 0 or self.types.max() >= N_TYPES:
            raise ValueError("residue type index out of range")

    @classmethod
    def from_sequence(cls, seq: str, coords=None, orients=None, t: int = 0) -> "CdrState":
        types = encode_sequence(seq)
        m = len(types)
        coords = np.zeros((m, 3)) if coords is None else coords
        orients = np.broadcast_to(np.eye(3), (m, 3, 3)).copy() if orients is None else orients
        return cls(types, coords, orients, t)

    @property
    def m(self) -> int:
        return self.types.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.types.shape[:-1]

    @property
    def sequence(self) -> str:
        if self.batch_shape:
            raise ValueError("sequence is only defined for a single design")
        return decode_sequence(self.types)

    def __getitem__(self, idx) -> "CdrState":
        if not self.batch_shape:
            raise IndexError("state has no batch axis")
        return CdrState(self.types[idx], self.coords[idx], self.orients[idx], self.t)

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("unbatched state has no len()")
        return self.batch_shape[0]

    def copy(self) -> "CdrState":
        return CdrState(self.types.copy(), self.coords.copy(), self.orients.copy(), self.t)

    def validate(self, tol: float = 1e-9) -> None:
        if not so3.is_rotation(self.orients, tol):
            raise ValueError("orientation is not a proper rotation")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("non-finite coordinates")


def stack_states(states) -> CdrState:
    states = list(states)
    return CdrState(np.stack([s.types for s in states]),
                    np.stack([s.coords for s in states]),
                    np.stack([s.orients for s in states]),
                    states[0].t)


@dataclass
class ComplexContext:
    """The fixed remainder of the complex that conditions generation."""

    types: np.ndarray
    coords: np.ndarray
    orients: np.ndarray
    chain_tags: list = field(default_factory=list)
    cdr_span: tuple[int, int] = (0, 1)

    def __post_init__(self):
        self.types = np.asarray(self.types, dtype=np.int64)
        self.coords = np.asarray(self.coords, dtype=float)
        self.orients = np.asarray(self.orients, dtype=float)
        n = len(self.types)
        if not self.chain_tags:
            self.chain_tags = ["heavy"] * n
        if self.coords.shape != (n, 3) or self.orients.shape != (n, 3, 3) \
                or len(self.chain_tags) != n:
            raise ValueError("context arrays must share length")
        bad = set(self.chain_tags) - {"antigen", "heavy", "light"}
        if bad:
            raise ValueError(f"unknown chain tags {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.types)

    def check_pair(self, a: CdrState) -> None:
        if self.cdr_span[1] != a.m:
            raise ValueError(
                f"context expects a loop of length {self.cdr_span[1]}, got {a.m}")


def _check_t(sched: NoiseSchedule, t: int) -> None:
    if not 1 <= t <= sched.T:
        raise ScheduleError(f"time index {t} outside [1, {sched.T}]")


# -- forward process ------------------------------------------------------

def forward_seq(s0, sched: NoiseSchedule, t: int, rng: np.random.Generator):
    """Noise residue types: keep with prob. alpha_bar, else resample uniformly."""
    _check_t(sched, t)
    s0 = np.asarray(s0, dtype=np.int64)
    keep = rng.random(s0.shape) < sched.alpha_bar_at(t)
    uniform = rng.integers(0, N_TYPES, size=s0.shape)
    out = np.where(keep, s0, uniform)
    return int(out) if out.ndim == 0 else out


def forward_coord(x0, sched: NoiseSchedule, t: int, rng: np.random.Generator) -> np.ndarray:
    _check_t(sched, t)
    x0 = np.asarray(x0, dtype=float)
    ab = sched.alpha_bar_at(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * rng.standard_normal(x0.shape)


def forward_orient(o0, sched: NoiseSchedule, t: int, rng: np.random.Generator) -> np.ndarray:
    _check_t(sched, t)
    o0 = np.asarray(o0, dtype=float)
    mean = so3.scale_rot(np.sqrt(sched.alpha_bar_at(t)), o0)
    return mean @ so3.sample_igso3_noise(sched.beta_bar_at(t), rng, o0.shape[:-2])


def forward_state(a0: CdrState, sched: NoiseSchedule, t: int,
                  rng: np.random.Generator) -> CdrState:
    """Noise all three modalities independently to time ``t``."""
    return CdrState(forward_seq(a0.types, sched, t, rng),
                    forward_coord(a0.coords, sched, t, rng),
                    forward_orient(a0.orients, sched, t, rng), t)


# -- reverse process ------------------------------------------------------

def check_output(out, shape: tuple) -> None:
    """Raise ContractViolation unless ``out`` matches the batch/residue ``shape``."""
    if out.seq_probs.shape != shape + (N_TYPES,):
        raise ContractViolation(
            f"seq_probs has shape {out.seq_probs.shape}, expected {shape + (N_TYPES,)}")
    if out.coord_means.shape != shape + (3,):
        raise ContractViolation(f"coord_means has shape {out.coord_means.shape}")
    if out.orient_means.shape != shape + (3, 3):
        raise ContractViolation(f"orient_means has shape {out.orient_means.shape}")


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,)) * cum[..., -1:]
    return np.minimum((u >= cum).sum(axis=-1), probs.shape[-1] - 1)


def sample_posterior(out, sched: NoiseSchedule, t: int, rng: np.random.Generator,
                     size: tuple = ()) -> CdrState:
    """Draw ``A^{t-1}`` from decoded posterior parameters.

    ``size`` prepends extra sample axes (used for K raw-space candidates).
    """
    b = sched.beta_at(t)
    shape = size + out.seq_probs.shape[:-1]
    probs = np.broadcast_to(out.seq_probs, shape + (N_TYPES,))
    types = sample_categorical(probs, rng)
    coords = out.coord_means + np.sqrt(b) * rng.standard_normal(shape + (3,))
    orients = out.orient_means @ so3.sample_igso3_noise(b, rng, shape)
    return CdrState(types, coords, orients, t - 1)


def ddpm_step(a_t: CdrState, ctx: ComplexContext, den, sched: NoiseSchedule,
              rng: np.random.Generator) -> CdrState:
    """Stochastic reverse transition from ``a_t.t`` to ``a_t.t - 1``."""
    t = a_t.t
    _check_t(sched, t)
    out = den.decode(den.encode(a_t, ctx, t), t)
    check_output(out, a_t.types.shape)
    return sample_posterior(out, sched, t, rng)


def ddim_step(z_t, den, sched: NoiseSchedule, t: int) -> CdrState:
    """Deterministic reverse transition decoded from latent ``z_t``.

    Types are the per-residue argmax of the categorical head (lowest index on
    ties), coordinates and orientations are the predicted means.
    """
    _check_t(sched, t)
    out = den.decode(z_t, t)
    shape = out.seq_probs.shape[:-1]
    check_output(out, shape)
    if shape[-1] != np.shape(z_t.values)[-2]:
        raise ContractViolation("decoded length differs from latent length")
    types = np.argmax(out.seq_probs, axis=-1)
    return CdrState(types, out.coord_means.copy(), out.orient_means.copy(), t - 1)


def with_time(a: CdrState, t: int) -> CdrState:
    return replace(a, t=t)
