"""Noise-model learning and denoising on paired noisy patches."""

from ._core import (
    ConditionError,
    DomainError,
    ConfigError,
    DataError,
    FormatError,
    NoiseModel,
    ShapeError,
    denoise,
    load_noise_model,
    nlf_model,
    noise_kl,
    psnr,
    r2r_corrupt,
    read_checkpoint,
    read_dataset,
    run,
    set_threads,
    ssim,
    synth,
    threads,
)

__all__ = [
    "ConditionError",
    "DomainError",
    "ConfigError",
    "DataError",
    "FormatError",
    "NoiseModel",
    "ShapeError",
    "denoise",
    "load_noise_model",
    "nlf_model",
    "noise_kl",
    "psnr",
    "r2r_corrupt",
    "read_checkpoint",
    "read_dataset",
    "run",
    "set_threads",
    "ssim",
    "synth",
    "threads",
]
