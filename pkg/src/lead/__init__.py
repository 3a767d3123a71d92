"""Latent black-box guidance for sequence-structure diffusion sampling."""

__version__ = "0.1.0"
