from .base import Denoiser, DenoiserOutput, LatentCode
from .oracle import OracleDenoiser
from .toy import ToyDenoiser, load_checkpoint, save_checkpoint, train_toy_denoiser

__all__ = ["Denoiser", "DenoiserOutput", "LatentCode", "OracleDenoiser", "ToyDenoiser",
           "train_toy_denoiser", "save_checkpoint", "load_checkpoint"]
