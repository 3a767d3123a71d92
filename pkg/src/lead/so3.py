"""Rotation-group utilities and the isotropic Gaussian on SO(3).

Rotations are plain ``(..., 3, 3)`` numpy arrays; every function broadcasts
over leading batch axes. Noise is composed on the right of the mean:
``sample = mean @ noise``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_DEFAULT_AXIS = np.array([0.0, 0.0, 1.0])
# Below this concentration the truncated series is replaced by its
# small-time limit: rotation vector ~ N(0, 2*eps*I).
SMALL_EPS = 1e-4


@dataclass(frozen=True)
class AxisAngle:
    axis: np.ndarray
    angle: float | np.ndarray


@dataclass(frozen=True)
class IgSo3Params:
    mean: np.ndarray = field(default_factory=lambda: np.eye(3))
    epsilon: float = 1.0
    series_terms: int | None = None
    grid_size: int = 8192

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.series_terms is not None and self.series_terms < 1:
            raise ValueError("series_terms must be >= 1")
        if self.grid_size < 64:
            raise ValueError("grid_size must be >= 64")
        if not is_rotation(self.mean, 1e-6):
            raise ValueError("mean must be a proper rotation")


def default_series_terms(epsilon: float) -> int:
    return 2000 if epsilon < 0.1 else 100


def hat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat` applied to the skew part of ``m``."""
    return 0.5 * np.stack([m[..., 2, 1] - m[..., 1, 2],
                           m[..., 0, 2] - m[..., 2, 0],
                           m[..., 1, 0] - m[..., 0, 1]], axis=-1)


def rotation_angle(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    s = np.linalg.norm(vee(r), axis=-1)
    c = 0.5 * (np.trace(r, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(s, c)


def from_rotvec(v: np.ndarray) -> np.ndarray:
    """Exponential map from rotation vectors ``(..., 3)`` to matrices."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)[..., None, None]
    k = hat(v)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * k + b * (k @ k)


def to_rotvec(r: np.ndarray) -> np.ndarray:
    """Logarithm map, returning rotation vectors with norm in ``[0, pi]``."""
    r = np.asarray(r, dtype=float)
    batch = r.shape[:-2]
    r = r.reshape(-1, 3, 3)
    theta = rotation_angle(r)
    w = vee(r)
    wn = np.linalg.norm(w, axis=-1)
    axis = np.tile(_DEFAULT_AXIS, (len(r), 1))
    ok = wn > 0
    axis[ok] = w[ok] / wn[ok, None]
    # near pi the skew part vanishes; recover the axis from the symmetric part
    near = theta > np.pi - 1e-2
    if np.any(near):
        th = theta[near]
        sym = 0.5 * (r[near] + np.swapaxes(r[near], -1, -2)) - np.cos(th)[:, None, None] * np.eye(3)
        col = np.argmax(np.diagonal(sym, axis1=-2, axis2=-1), axis=-1)
        a = sym[np.arange(len(col)), :, col]
        a /= np.linalg.norm(a, axis=-1, keepdims=True)
        a *= np.where(np.sum(a * w[near], axis=-1) < 0, -1.0, 1.0)[:, None]
        axis[near] = a
    return (axis * theta[:, None]).reshape(batch + (3,))


def to_axis_angle(r: np.ndarray) -> AxisAngle:
    v = to_rotvec(r)
    angle = np.linalg.norm(v, axis=-1)
    axis = np.where(angle[..., None] > 0, v / np.where(angle > 0, angle, 1.0)[..., None],
                    _DEFAULT_AXIS)
    if np.ndim(angle) == 0:
        angle = float(angle)
    return AxisAngle(axis, angle)


def from_axis_angle(a: AxisAngle) -> np.ndarray:
    return from_rotvec(np.asarray(a.axis, dtype=float) * np.asarray(a.angle)[..., None])


def scale_rot(scale, r: np.ndarray) -> np.ndarray:
    """Scale the rotation angle of ``r`` by ``scale`` about its own axis."""
    return from_rotvec(np.asarray(scale)[..., None] * to_rotvec(r))


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return rotation_angle(np.swapaxes(a, -1, -2) @ b)


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[..., :, -1] *= d[..., None]
    return u @ vt


def random_rotations(rng: np.random.Generator, size=()) -> np.ndarray:
    """Haar-uniform rotations via normalized quaternions."""
    q = rng.standard_normal(np.shape(np.empty(size)) + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def _series(omega: np.ndarray, epsilon: float, L: int) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape)
    flat = omega.ravel()
    res = out.ravel()
    tiny = flat < 1e-4
    l = np.arange(L + 1, dtype=float)
    weights = (2 * l + 1) * np.exp(-l * (l + 1) * epsilon)
    # terms past this point are below double precision relative to l=0
    keep = np.exp(-l * (l + 1) * epsilon) > 1e-18
    l, weights = l[keep], weights[keep]
    # chunk over omega to bound memory at L*chunk doubles
    chunk = max(1, 2_000_000 // len(l))
    for start in range(0, flat.size, chunk):
        w = flat[start:start + chunk]
        t = tiny[start:start + chunk]
        ws = np.where(t, 1.0, w)
        ratio = np.sin(np.outer(ws, l + 0.5)) / np.sin(ws / 2)[:, None]
        # Taylor limit of sin((l+1/2)w)/sin(w/2) as w -> 0
        lim = (2 * l + 1) * (1 - w[:, None] ** 2 * ((l + 0.5) ** 2 - 0.25) / 6.0)
        ratio = np.where(t[:, None], lim, ratio)
        res[start:start + chunk] = ratio @ weights
    return out


def igso3_density(omega, epsilon: float, L: int | None = None):
    """Marginal density of the rotation angle under IGSO3 at concentration ``epsilon``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    L = default_series_terms(epsilon) if L is None else L
    omega = np.asarray(omega, dtype=float)
    dens = (1.0 - np.cos(omega)) / np.pi * _series(omega, epsilon, L)
    dens = np.maximum(dens, 0.0)
    return float(dens) if dens.ndim == 0 else dens


def haar_angle_density(omega):
    return (1.0 - np.cos(omega)) / np.pi


@lru_cache(maxsize=512)
def _angle_table(epsilon: float, L: int, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(0.0, np.pi, grid_size)
    dens = igso3_density(grid, epsilon, L)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    grid.setflags(write=False)
    cdf.setflags(write=False)
    return grid, cdf


def igso3_cdf_table(epsilon: float, L: int | None = None, grid_size: int = 8192):
    """``(grid, cdf)`` arrays of the tabulated angle CDF (cached)."""
    L = default_series_terms(epsilon) if L is None else L
    return _angle_table(float(epsilon), int(L), int(grid_size))


def sample_igso3_angle(epsilon: float, rng: np.random.Generator, size=(),
                       L: int | None = None, grid_size: int = 8192) -> np.ndarray:
    if epsilon < SMALL_EPS:
        v = rng.standard_normal(np.shape(np.empty(size)) + (3,)) * np.sqrt(2 * epsilon)
        return np.minimum(np.linalg.norm(v, axis=-1), np.pi)
    grid, cdf = igso3_cdf_table(epsilon, L, grid_size)
    u = rng.random(size)
    return np.interp(u, cdf, grid)


def _uniform_axes(rng: np.random.Generator, size=()) -> np.ndarray:
    v = rng.standard_normal(np.shape(np.empty(size)) + (3,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def sample_igso3_noise(epsilon: float, rng: np.random.Generator, size=(),
                       L: int | None = None, grid_size: int = 8192) -> np.ndarray:
    """Draw identity-centred IGSO3 rotations with leading shape ``size``."""
    if epsilon < SMALL_EPS:
        v = rng.standard_normal(np.shape(np.empty(size)) + (3,)) * np.sqrt(2 * epsilon)
        return from_rotvec(v)
    omega = sample_igso3_angle(epsilon, rng, size, L, grid_size)
    axis = _uniform_axes(rng, size)
    return from_rotvec(axis * np.asarray(omega)[..., None])


def sample_igso3(p: IgSo3Params, rng: np.random.Generator, size=()) -> np.ndarray:
    """Sample ``p.mean @ noise``. ``p.mean`` may carry batch axes matching ``size``."""
    mean = np.asarray(p.mean, dtype=float)
    if size == () and mean.ndim > 2:
        size = mean.shape[:-2]
    noise = sample_igso3_noise(p.epsilon, rng, size, p.series_terms, p.grid_size)
    return mean @ noise


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    r = np.asarray(r, dtype=float)
    eye = np.eye(3)
    orth = np.abs(np.swapaxes(r, -1, -2) @ r - eye).max() <= tol
    det = np.abs(np.linalg.det(r) - 1.0).max() <= tol
    return bool(orth and det)
