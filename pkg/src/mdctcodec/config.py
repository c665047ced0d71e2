"""Flat codec configuration: every tunable number in one place.

The same object drives the transforms, model, quantizer, discriminator and
trainer, serializes to a flat ``key = value`` text file (the CLI's --config
format) and hashes to the fingerprint that ties checkpoints and bitstreams
to the settings that produced them.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError
from .losses import LossWeights
from .model import ModelConfig
from .quantizer import RvqConfig
from .transform import MdctConfig, MelConfig


@dataclass(frozen=True)
class CodecConfig:
    # format
    format_version: int = 1
    # audio / framing
    sample_rate: int = 48000
    frame_shift: int = 40
    # model
    latent_dim: int = 32
    downsample_rate: int = 8
    hidden_width: int = 256
    block_intermediate: int = 512
    num_blocks: int = 8
    kernel_size: int = 7
    # quantizer
    num_quantizers: int = 4
    codebook_size: int = 1024
    # discriminator
    disc_channels: int = 64
    disc_bins: tuple[int, ...] = (200, 50, 20)
    # mel extraction (hop is locked to frame_shift)
    mel_fft_size: int = 1024
    mel_bins: int = 80
    mel_fmin: float = 0.0
    mel_fmax: float = 24000.0
    mel_floor: float = 1e-5
    # loss weights
    weight_mdct: float = 250.0
    weight_mel: float = 45.0
    weight_codebook: float = 10.0
    weight_commitment: float = 0.25
    weight_adversarial: float = 1.0
    weight_feature_matching: float = 1.0
    # optimization
    batch_size: int = 48
    segment_samples: int = 7960
    learning_rate: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    lr_decay_per_epoch: float = 0.999
    total_steps: int = 200_000
    checkpoint_every: int = 5000
    revival_patience: int = 200
    kmeans_iterations: int = 10
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        positive = ("sample_rate", "frame_shift", "latent_dim", "downsample_rate",
                    "hidden_width", "block_intermediate", "num_blocks",
                    "kernel_size", "num_quantizers", "codebook_size",
                    "disc_channels", "mel_fft_size", "mel_bins", "batch_size",
                    "segment_samples", "total_steps", "checkpoint_every",
                    "revival_patience", "kmeans_iterations")
        for name in positive:
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise InvalidConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidConfigError("betas must lie in [0, 1)")
        if self.learning_rate <= 0 or self.adam_eps <= 0:
            raise InvalidConfigError("learning_rate and adam_eps must be positive")
        if not 0.0 < self.lr_decay_per_epoch <= 1.0:
            raise InvalidConfigError("lr_decay_per_epoch must lie in (0, 1]")
        if self.mel_fmax > self.sample_rate / 2:
            raise InvalidConfigError("mel_fmax exceeds Nyquist")
        if not self.disc_bins:
            raise InvalidConfigError("disc_bins must not be empty")

    # -- derived handles ----------------------------------------------------

    @property
    def token_hop(self) -> int:
        """Waveform samples per token frame (frame_shift * downsample_rate)."""
        return self.frame_shift * self.downsample_rate

    @property
    def effective_segment(self) -> int:
        """Training crop length: segment_samples rounded up to a whole token hop."""
        hop = self.token_hop
        return -(-self.segment_samples // hop) * hop

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def mdct_config(self) -> MdctConfig:
        return MdctConfig.from_bins(self.frame_shift)

    def mel_config(self) -> MelConfig:
        return MelConfig(sample_rate=self.sample_rate, fft_size=self.mel_fft_size,
                         hop=self.frame_shift, mel_bins=self.mel_bins,
                         f_min=self.mel_fmin, f_max=self.mel_fmax,
                         log_floor=self.mel_floor)

    def model_config(self) -> ModelConfig:
        return ModelConfig(spectrum_bins=self.frame_shift,
                           hidden_width=self.hidden_width,
                           block_intermediate=self.block_intermediate,
                           num_blocks=self.num_blocks,
                           latent_dim=self.latent_dim,
                           downsample_rate=self.downsample_rate,
                           kernel_size=self.kernel_size)

    def rvq_config(self) -> RvqConfig:
        return RvqConfig(num_quantizers=self.num_quantizers,
                         codebook_size=self.codebook_size,
                         code_dim=self.latent_dim)

    def disc_configs(self):
        from .discriminator import SubDiscConfig

        return tuple(SubDiscConfig(MdctConfig.from_bins(k), channels=self.disc_channels)
                     for k in self.disc_bins)

    def loss_weights(self) -> LossWeights:
        return LossWeights(mdct=self.weight_mdct, mel=self.weight_mel,
                           codebook=self.weight_codebook,
                           commitment=self.weight_commitment,
                           adversarial=self.weight_adversarial,
                           feature_matching=self.weight_feature_matching)

    # -- text form ------------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{field.name} = {value}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.to_text().encode()).digest()[:16]

    def with_overrides(self, pairs: dict[str, str] | list[str]) -> "CodecConfig":
        """Apply ``key=value`` overrides; unknown keys are rejected by name."""
        if not isinstance(pairs, dict):
            parsed = {}
            for item in pairs:
                if "=" not in item:
                    raise InvalidConfigError(
                        f"override {item!r} is not of the form key=value")
                key, _, value = item.partition("=")
                parsed[key.strip()] = value.strip()
            pairs = parsed
        updates = {key: _parse_value(key, value) for key, value in pairs.items()}
        return dataclasses.replace(self, **updates)

    @classmethod
    def from_text(cls, text: str) -> "CodecConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfigError(f"line {lineno}: expected key = value, got {raw!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = _parse_value(key.strip(), value.strip())
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path) -> "CodecConfig":
        return cls.from_text(Path(path).read_text())


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(CodecConfig)}


def _parse_value(key: str, value: str):
    if key not in _FIELD_TYPES:
        valid = ", ".join(sorted(_FIELD_TYPES))
        raise InvalidConfigError(f"unknown config key {key!r}; valid keys: {valid}")
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind.startswith("tuple"):
            return tuple(int(v) for v in value.split(",") if v.strip())
        return value
    except ValueError as exc:
        raise InvalidConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
