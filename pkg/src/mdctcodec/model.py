"""Encoder and decoder mapping MDCT spectra to latent codes and back.

Both halves share a modified ConvNeXt v2 backbone (depth-wise conv, layer
norm, pointwise expansion, GELU, GRN, pointwise projection, residual add).
The projection linear of each block starts at zero so every block is exactly
the identity map at initialization; the surrounding convolutions carry the
random init.

Tensors between layers are channels-last [B, L, F]; convolutions run
channels-first internally with explicit transposes at the boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvalidConfigError, ShapeError
from .layers import (GRN, Conv1d, ConvTranspose1d, LayerNorm, Linear, Module,
                     gelu)
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    spectrum_bins: int = 40
    hidden_width: int = 256
    block_intermediate: int = 512
    num_blocks: int = 8
    latent_dim: int = 32
    downsample_rate: int = 8
    kernel_size: int = 7

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 1:
                raise InvalidConfigError(f"{name} must be >= 1, got {value}")


class ConvNeXtV2Block(Module):
    def __init__(self, width: int, intermediate: int, kernel_size: int,
                 rng: np.random.Generator, dtype=np.float64):
        self.dwconv = Conv1d(width, width, kernel_size, rng, groups=width,
                             dtype=dtype)
        self.norm = LayerNorm(width, dtype=dtype)
        self.expand = Linear(width, intermediate, rng, dtype=dtype)
        self.grn = GRN(intermediate, dtype=dtype)
        # zero projection keeps the whole block an identity map at init
        self.project = Linear(intermediate, width, rng, dtype=dtype,
                              zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.dwconv(x.transpose((0, 2, 1))).transpose((0, 2, 1))
        h = self.project(self.grn(gelu(self.expand(self.norm(h)))))
        return x + h


class Encoder(Module):
    """MDCT spectrum [B, N, K] -> latent code [B, N/R, latent_dim]."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator,
                 dtype=np.float64):
        self.cfg = cfg
        w, k = cfg.hidden_width, cfg.kernel_size
        self.stem = Conv1d(cfg.spectrum_bins, w, k, rng, dtype=dtype)
        self.stem_norm = LayerNorm(w, dtype=dtype)
        self.blocks = [ConvNeXtV2Block(w, cfg.block_intermediate, k, rng, dtype)
                       for _ in range(cfg.num_blocks)]
        self.out_norm = LayerNorm(w, dtype=dtype)
        self.out_linear = Linear(w, w, rng, dtype=dtype)
        self.down = Conv1d(w, w, k, rng, stride=cfg.downsample_rate, dtype=dtype)
        self.head = Conv1d(w, cfg.latent_dim, k, rng, dtype=dtype)

    def __call__(self, spectrum: Tensor) -> Tensor:
        if spectrum.ndim != 3 or spectrum.shape[2] != self.cfg.spectrum_bins:
            raise ShapeError(
                f"encoder expects [B, N, {self.cfg.spectrum_bins}], got {spectrum.shape}")
        if spectrum.shape[1] % self.cfg.downsample_rate:
            raise ContractError(
                f"frame count {spectrum.shape[1]} not divisible by "
                f"downsample rate {self.cfg.downsample_rate}; crop the input")
        h = self.stem(spectrum.transpose((0, 2, 1))).transpose((0, 2, 1))
        h = self.stem_norm(h)
        for block in self.blocks:
            h = block(h)
        h = self.out_linear(self.out_norm(h))
        h = self.down(h.transpose((0, 2, 1)))
        return self.head(h).transpose((0, 2, 1))


class Decoder(Module):
    """Latent code [B, N/R, latent_dim] -> MDCT spectrum [B, N, K]."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator,
                 dtype=np.float64):
        self.cfg = cfg
        w, k = cfg.hidden_width, cfg.kernel_size
        self.stem = Conv1d(cfg.latent_dim, w, k, rng, dtype=dtype)
        self.up = ConvTranspose1d(w, w, k, rng, stride=cfg.downsample_rate,
                                  dtype=dtype)
        self.stem_norm = LayerNorm(w, dtype=dtype)
        self.blocks = [ConvNeXtV2Block(w, cfg.block_intermediate, k, rng, dtype)
                       for _ in range(cfg.num_blocks)]
        self.out_norm = LayerNorm(w, dtype=dtype)
        self.out_linear = Linear(w, w, rng, dtype=dtype)
        self.head = Conv1d(w, cfg.spectrum_bins, k, rng, dtype=dtype)

    def __call__(self, code: Tensor) -> Tensor:
        if code.ndim != 3 or code.shape[2] != self.cfg.latent_dim:
            raise ShapeError(
                f"decoder expects [B, M, {self.cfg.latent_dim}], got {code.shape}")
        h = self.stem(code.transpose((0, 2, 1)))
        h = self.up(h).transpose((0, 2, 1))
        h = self.stem_norm(h)
        for block in self.blocks:
            h = block(h)
        h = self.out_linear(self.out_norm(h))
        return self.head(h.transpose((0, 2, 1))).transpose((0, 2, 1))


class Generator(Module):
    """Encoder/decoder pair (the quantizer sits between them in the trainer)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator,
                 dtype=np.float64):
        self.encoder = Encoder(cfg, rng, dtype)
        self.decoder = Decoder(cfg, rng, dtype)
