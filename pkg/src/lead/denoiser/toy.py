"""Small trainable shared-encoder denoiser in plain numpy.

Encoder: per-residue features (type one-hot, coordinates, flattened
orientation, sinusoidal time embedding, residue position one-hot, pooled
context summary) pass through a tanh layer that also sees the mean over
residues, then a linear map to ``latent_dim`` learned channels. The latent
code appends the noisy observation itself (type one-hot, coordinates,
rotation vector) as 26 pass-through channels, so perturbing it moves every
modality.

Each decoder is a one-hidden-layer tanh network reading the whole latent row
plus a time embedding and predicting the clean residue: type probabilities,
coordinates, and a 3x3 matrix projected onto SO(3). The predictions are
combined with the pass-through observation through the analytic forward
posterior to give the step-``t-1`` parameters.

Checkpoints are ``.npz`` archives holding every parameter tensor plus a
``__header__`` JSON string (format name, version, architecture sizes).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .. import so3
from ..diffusion import N_TYPES, CdrState, ComplexContext, forward_state, stack_states
from ..schedule import NoiseSchedule
from .base import (Denoiser, DenoiserOutput, LatentCode, categorical_posterior,
                   gaussian_posterior_mean, normalize_rows, rotation_posterior_mean)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "lead-toy-denoiser"
CHECKPOINT_VERSION = 1
TIME_DIM = 16
HEADS = ("seq", "coord", "orient")
HEAD_OUT = {"seq": N_TYPES, "coord": 3, "orient": 9}
N_SKIP = N_TYPES + 6


def time_embedding(t, T: int) -> np.ndarray:
    freqs = np.exp(np.linspace(0.0, np.log(100.0), TIME_DIM // 2))
    x = np.asarray(t, dtype=float)[..., None] / T * freqs
    return np.concatenate([np.sin(x), np.cos(x)], axis=-1)


def context_summary(ctx: ComplexContext | None) -> np.ndarray:
    if ctx is None or len(ctx) == 0:
        return np.zeros(N_TYPES + 3)
    return np.concatenate([np.eye(N_TYPES)[ctx.types].mean(0), ctx.coords.mean(0) / 10.0])


@dataclass
class ToyConfig:
    m: int
    T: int
    latent_dim: int = 32
    hidden: int = 64
    head_hidden: int = 32

    @property
    def n_features(self) -> int:
        return N_TYPES + 3 + 9 + TIME_DIM + self.m + N_TYPES + 3

    @property
    def width(self) -> int:
        """Full latent width: learned channels plus pass-through channels."""
        return self.latent_dim + N_SKIP


def init_params(cfg: ToyConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    def dense(n_in, n_out):
        return rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)

    f, h, d, hh = cfg.n_features, cfg.hidden, cfg.latent_dim, cfg.head_hidden
    p = {"enc_W1": dense(f, h), "enc_U1": dense(f, h), "enc_b1": np.zeros(h),
         "enc_W2": dense(h, d), "enc_b2": np.zeros(d)}
    for k in HEADS:
        p[f"{k}_A"] = dense(d + N_SKIP + TIME_DIM, hh)
        p[f"{k}_a"] = np.zeros(hh)
        p[f"{k}_B"] = dense(hh, HEAD_OUT[k]) * 0.1
        p[f"{k}_b"] = np.zeros(HEAD_OUT[k])
    p["orient_b"] = np.eye(3).ravel().copy()
    return p


def _softmax(x):
    x = x - x.max(-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(-1, keepdims=True)


class ToyDenoiser(Denoiser):

    def __init__(self, cfg: ToyConfig, params: dict[str, np.ndarray], sched: NoiseSchedule):
        if sched.T != cfg.T:
            raise ValueError("schedule length differs from the model's T")
        self.cfg = cfg
        self.params = params
        self.sched = sched
        self.latent_dim = cfg.width
        self.history: list[float] = []

    # -- forward pieces, shared by inference and training ---------------

    def features(self, a_t: CdrState, ctx: ComplexContext | None, t) -> np.ndarray:
        if a_t.m != self.cfg.m:
            raise ValueError(f"model was built for m={self.cfg.m}, got {a_t.m}")
        if ctx is not None:
            ctx.check_pair(a_t)
        shape = a_t.types.shape
        temb = np.broadcast_to(time_embedding(t, self.cfg.T)[..., None, :], shape + (TIME_DIM,))
        pos = np.broadcast_to(np.eye(self.cfg.m), shape + (self.cfg.m,))
        csum = np.broadcast_to(context_summary(ctx), shape + (N_TYPES + 3,))
        return np.concatenate([np.eye(N_TYPES)[a_t.types], a_t.coords,
                               a_t.orients.reshape(shape + (9,)), temb, pos, csum], axis=-1)

    def _encode_raw(self, x):
        p = self.params
        h = np.tanh(x @ p["enc_W1"] + x.mean(-2, keepdims=True) @ p["enc_U1"] + p["enc_b1"])
        return h, h @ p["enc_W2"] + p["enc_b2"]

    def _head_input(self, z, t):
        temb = time_embedding(t, self.cfg.T)
        temb = np.broadcast_to(temb[..., None, :] if np.ndim(t) else temb,
                               z.shape[:-1] + (TIME_DIM,))
        return np.concatenate([z, temb], axis=-1)

    def _skip_terms(self, skip, t) -> dict[str, np.ndarray]:
        """Analytic offsets added to the head outputs.

        Type logits get the observation log-likelihood ``log q(s^t | s^0)``;
        coordinates and the rotation matrix get ``sqrt(alpha_bar) * x^t`` and
        ``sqrt(alpha_bar) * O^t``, and their learned residual is scaled by
        ``sqrt(1 - alpha_bar)`` so it vanishes as ``t -> 0``.
        """
        ab = np.where(np.asarray(t) == 0, 1.0, self.sched.alpha_bar[np.maximum(np.asarray(t), 1) - 1])
        ab = np.asarray(ab, dtype=float)[..., None, None] if np.ndim(t) else float(ab)
        obs = normalize_rows(skip[..., :N_TYPES])
        x_t = skip[..., N_TYPES:N_TYPES + 3]
        o_t = so3.from_rotvec(skip[..., N_TYPES + 3:]).reshape(skip.shape[:-1] + (9,))
        offsets = {"seq": np.log(ab * obs + (1.0 - ab) / N_TYPES),
                   "coord": np.sqrt(ab) * x_t, "orient": np.sqrt(ab) * o_t}
        scales = {"seq": 1.0, "coord": np.sqrt(1.0 - ab), "orient": np.sqrt(1.0 - ab)}
        return offsets, scales

    def _heads_raw(self, u):
        p = self.params
        out = {}
        for k in HEADS:
            g = np.tanh(u @ p[f"{k}_A"] + p[f"{k}_a"])
            out[k] = (g, g @ p[f"{k}_B"] + p[f"{k}_b"])
        return out

    def encode(self, a_t: CdrState, ctx: ComplexContext | None, t: int) -> LatentCode:
        learned = self._encode_raw(self.features(a_t, ctx, t))[1]
        skip = np.concatenate([np.eye(N_TYPES)[a_t.types], a_t.coords,
                               so3.to_rotvec(a_t.orients)], axis=-1)
        return LatentCode(np.concatenate([learned, skip], axis=-1), t)

    def predict_clean(self, z: LatentCode, t: int):
        """Clean-loop predictions ``(type probs, coords, rotations)`` from ``z``."""
        heads = self._heads_raw(self._head_input(z.values, t))
        off, scale = self._skip_terms(z.values[..., self.cfg.latent_dim:], t)
        out = {k: scale[k] * heads[k][1] + off[k] for k in HEADS}
        mats = out["orient"].reshape(out["orient"].shape[:-1] + (3, 3))
        return _softmax(out["seq"]), out["coord"], so3.project_to_so3(mats)

    def decode(self, z: LatentCode, t: int) -> DenoiserOutput:
        d = self.cfg.latent_dim
        obs = normalize_rows(z.values[..., d:d + N_TYPES])
        x_t = z.values[..., d + N_TYPES:d + N_TYPES + 3]
        v_t = z.values[..., d + N_TYPES + 3:]
        p0, x0, r0 = self.predict_clean(z, t)
        return DenoiserOutput(categorical_posterior(obs, p0, self.sched, t),
                              gaussian_posterior_mean(x0, x_t, self.sched, t),
                              rotation_posterior_mean(so3.to_rotvec(r0), so3.from_rotvec(v_t),
                                                      self.sched, t))

    # -- training --------------------------------------------------------

    def loss_and_grads(self, batch, need_grads: bool = True):
        """Mean per-residue loss of the clean-loop predictions, with gradients.

        ``batch`` holds encoder features ``x``, pass-through channels
        ``skip``, times ``t`` and clean ``targets``. The loss is type
        cross-entropy plus squared coordinate error plus the squared Frobenius
        distance between the unprojected 3x3 output and the clean rotation.
        """
        p = self.params
        x, targets = batch["x"], batch["targets"]
        h, zl = self._encode_raw(x)
        d = self.cfg.latent_dim
        u = self._head_input(np.concatenate([zl, batch["skip"]], axis=-1), batch["t"])
        heads = self._heads_raw(u)
        off, scale = self._skip_terms(batch["skip"], batch["t"])
        y = {k: scale[k] * heads[k][1] + off[k] for k in HEADS}
        n = np.prod(x.shape[:-1])
        probs = _softmax(y["seq"])
        ce = -(targets["seq"] * np.log(probs + 1e-12)).sum() / n
        dx_ = y["coord"] - targets["coord"]
        do_ = y["orient"] - targets["orient"]
        mse_x = (dx_ ** 2).sum() / n
        mse_o = (do_ ** 2).sum() / n
        losses = {"seq": ce, "coord": mse_x, "orient": mse_o}
        total = ce + mse_x + mse_o
        if not need_grads:
            return total, losses, None
        dys = {"seq": (probs - targets["seq"]) / n, "coord": 2 * scale["coord"] * dx_ / n,
               "orient": 2 * scale["orient"] * do_ / n}
        g = {}
        du = np.zeros_like(u)
        flat = lambda a: a.reshape(-1, a.shape[-1])
        for k in HEADS:
            gk, _ = heads[k]
            dy = dys[k]
            g[f"{k}_B"] = flat(gk).T @ flat(dy)
            g[f"{k}_b"] = flat(dy).sum(0)
            dpre = (dy @ p[f"{k}_B"].T) * (1 - gk ** 2)
            g[f"{k}_A"] = flat(u).T @ flat(dpre)
            g[f"{k}_a"] = flat(dpre).sum(0)
            du += dpre @ p[f"{k}_A"].T
        dz = du[..., :d]
        g["enc_W2"] = flat(h).T @ flat(dz)
        g["enc_b2"] = flat(dz).sum(0)
        dpre1 = (dz @ p["enc_W2"].T) * (1 - h ** 2)
        g["enc_W1"] = flat(x).T @ flat(dpre1)
        xm = x.mean(-2)
        g["enc_U1"] = xm.reshape(-1, xm.shape[-1]).T @ dpre1.sum(-2).reshape(-1, dpre1.shape[-1])
        g["enc_b1"] = flat(dpre1).sum(0)
        return total, losses, g


def make_batch(model: ToyDenoiser, a0: CdrState, ctx, sched: NoiseSchedule,
               rng: np.random.Generator) -> dict:
    """Noise clean designs to uniformly drawn times and collect model inputs."""
    n = a0.batch_shape[0]
    t = rng.integers(1, sched.T + 1, size=n)
    types = np.empty_like(a0.types)
    coords = np.empty_like(a0.coords)
    orients = np.empty_like(a0.orients)
    for tv in np.unique(t):
        sel = np.flatnonzero(t == tv)
        st = forward_state(a0[sel], sched, int(tv), rng)
        types[sel], coords[sel], orients[sel] = st.types, st.coords, st.orients
    a_t = CdrState(types, coords, orients, 0)
    skip = np.concatenate([np.eye(N_TYPES)[types], coords, so3.to_rotvec(orients)], axis=-1)
    targets = {"seq": np.eye(N_TYPES)[a0.types], "coord": a0.coords,
               "orient": a0.orients.reshape(a0.orients.shape[:-2] + (9,))}
    return {"x": model.features(a_t, ctx, t), "skip": skip, "t": t, "targets": targets}


def _as_batch(dataset):
    items = list(dataset)
    if not items:
        raise ValueError("training dataset is empty")
    states = [s for s, _ in items]
    ms = {s.m for s in states}
    if len(ms) != 1:
        raise ValueError(f"inconsistent loop lengths in dataset: {sorted(ms)}")
    ctxs = [c for _, c in items]
    return stack_states(states), ctxs[0]


def train_toy_denoiser(dataset, sched: NoiseSchedule, epochs: int,
                       rng: np.random.Generator, *, latent_dim: int = 32, hidden: int = 64,
                       batch_size: int = 128, lr: float = 3e-3, history: list | None = None,
                       init_seed: int | None = None) -> ToyDenoiser:
    """Fit a :class:`ToyDenoiser` on ``(clean CdrState, ComplexContext)`` pairs.

    All items must share ``m``; the first item's context conditions every
    example. The heads are fit to the clean loop (types, coordinates,
    rotations) from freshly noised minibatches with Adam. Per-epoch validation
    losses (the first entry is the untrained loss) end up in ``model.history``
    and are also appended to ``history`` if given.
    """
    a0, ctx = _as_batch(dataset)
    cfg = ToyConfig(m=a0.m, T=sched.T, latent_dim=latent_dim, hidden=hidden)
    init_rng = rng if init_seed is None else np.random.default_rng(init_seed)
    model = ToyDenoiser(cfg, init_params(cfg, init_rng), sched)
    if epochs <= 0:
        return model
    val = make_batch(model, a0[: min(512, len(a0))], ctx, sched, np.random.default_rng(12345))
    m1 = {k: np.zeros_like(v) for k, v in model.params.items()}
    m2 = {k: np.zeros_like(v) for k, v in model.params.items()}
    b1, b2, step = 0.9, 0.999, 0
    model.history.append(model.loss_and_grads(val, need_grads=False)[0])
    n = len(a0)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, _, grads = model.loss_and_grads(make_batch(model, a0[idx], ctx, sched, rng))
            step += 1
            for k, g in grads.items():
                m1[k] = b1 * m1[k] + (1 - b1) * g
                m2[k] = b2 * m2[k] + (1 - b2) * g * g
                mhat = m1[k] / (1 - b1 ** step)
                vhat = m2[k] / (1 - b2 ** step)
                model.params[k] -= lr * mhat / (np.sqrt(vhat) + 1e-8)
        val_loss = model.loss_and_grads(val, need_grads=False)[0]
        model.history.append(val_loss)
        log.debug("epoch %d validation loss %.4f", epoch, val_loss)
    if history is not None:
        history.extend(model.history)
    return model


def save_checkpoint(model: ToyDenoiser, path) -> None:
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
              "m": model.cfg.m, "T": model.cfg.T, "latent_dim": model.cfg.latent_dim,
              "hidden": model.cfg.hidden, "head_hidden": model.cfg.head_hidden,
              "schedule": model.sched.as_dict()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **model.params)


def load_checkpoint(path, sched: NoiseSchedule | None = None) -> ToyDenoiser:
    from ..schedule import build_schedule

    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a toy denoiser checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        params = {k: data[k].copy() for k in data.files if k != "__header__"}
    cfg = ToyConfig(header["m"], header["T"], header["latent_dim"], header["hidden"],
                    header["head_hidden"])
    if sched is None:
        s = header["schedule"]
        sched = build_schedule(s["T"], s["kind"], s["beta_min"], s["beta_max"])
    return ToyDenoiser(cfg, params, sched)
