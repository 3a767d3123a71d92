"""Small denoisers whose decode is an explicit function of the latent."""
import numpy as np

from lead.denoiser.base import Denoiser, DenoiserOutput, LatentCode
from lead.diffusion import N_TYPES


class LinearDecoder(Denoiser):
    """Coordinates are ``P @ z`` per residue; types and rotations are fixed.

    ``encode`` returns the stored latent ``z0`` whatever the input.
    """

    def __init__(self, P, z0):
        self.P = np.asarray(P, dtype=float)
        self.z0 = np.asarray(z0, dtype=float)
        self.latent_dim = self.P.shape[1]

    def encode(self, a_t, ctx, t):
        return LatentCode(self.z0.copy(), t)

    def decode(self, z, t):
        v = z.values
        shape = v.shape[:-1]
        probs = np.full(shape + (N_TYPES,), 1.0 / N_TYPES)
        probs[..., 0] += 1e-3
        probs /= probs.sum(-1, keepdims=True)
        return DenoiserOutput(probs, v @ self.P.T, np.broadcast_to(np.eye(3), shape + (3, 3)))
