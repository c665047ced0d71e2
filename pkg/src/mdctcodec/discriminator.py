"""Multi-resolution MDCT discriminator.

Three parallel sub-discriminators score a waveform through MDCT spectra at
coarse, medium and fine resolutions.  Each one runs the raw signed spectrum
(time x frequency, single channel) through five 64-channel 2-D convolutions
with LeakyReLU and a final single-channel convolution that produces the
score map.  The five post-activation maps feed the feature-matching loss.

The paper's kernel sizes are fixed; strides are not stated, so the middle
four layers downsample by 2 in both axes (config-exposed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InvalidConfigError
from .layers import Conv2d, Module, leaky_relu
from .tensor import Tensor
from .transform import MdctConfig, mdct_t

LEAKY_SLOPE = 0.1

DEFAULT_KERNELS = ((7, 5), (5, 3), (5, 3), (3, 3), (3, 3), (3, 3))
DEFAULT_STRIDES = ((1, 1), (2, 2), (2, 2), (2, 2), (2, 2), (1, 1))


@dataclass(frozen=True)
class SubDiscConfig:
    mdct: MdctConfig
    channels: int = 64
    kernels: tuple[tuple[int, int], ...] = DEFAULT_KERNELS
    strides: tuple[tuple[int, int], ...] = DEFAULT_STRIDES

    def __post_init__(self):
        if len(self.kernels) != len(self.strides):
            raise InvalidConfigError("kernels and strides must pair up")
        if len(self.kernels) < 2:
            raise InvalidConfigError("need at least one hidden conv plus the score conv")
        if self.channels < 1:
            raise InvalidConfigError("channels must be >= 1")


def default_resolutions(channels: int = 64) -> tuple[SubDiscConfig, ...]:
    """The three operating resolutions: (400, 200, 200), (100, 50, 50), (40, 20, 20)."""
    return tuple(SubDiscConfig(MdctConfig.from_bins(k), channels=channels)
                 for k in (200, 50, 20))


class SubDiscriminator(Module):
    def __init__(self, cfg: SubDiscConfig, rng: np.random.Generator,
                 dtype=np.float64):
        self.cfg = cfg
        chans = [1] + [cfg.channels] * (len(cfg.kernels) - 1) + [1]
        self.convs = [Conv2d(chans[i], chans[i + 1], cfg.kernels[i], rng,
                             stride=cfg.strides[i], dtype=dtype)
                      for i in range(len(cfg.kernels))]

    def __call__(self, waveform: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Score map and the hidden post-activation feature maps.

        `waveform` is [B, T] with T >= 1 so at least one MDCT frame exists;
        gradients flow back into the waveform through the MDCT front-end.
        """
        if waveform.ndim != 2 or waveform.shape[1] < 1:
            raise ContractError(
                f"sub-discriminator needs a non-empty [B, T] waveform, got {waveform.shape}")
        spec = mdct_t(waveform, self.cfg.mdct)
        h = spec.reshape(spec.shape[0], 1, spec.shape[1], spec.shape[2])
        features = []
        for conv in self.convs[:-1]:
            h = leaky_relu(conv(h), LEAKY_SLOPE)
            features.append(h)
        return self.convs[-1](h), features


@dataclass
class DiscriminatorOutput:
    scores: list[Tensor]
    features: list[list[Tensor]] = field(default_factory=list)


class MultiResolutionMdctDiscriminator(Module):
    """The three sub-discriminators, applied coarse to fine."""

    def __init__(self, rng: np.random.Generator,
                 configs: tuple[SubDiscConfig, ...] | None = None,
                 dtype=np.float64):
        self.subs = [SubDiscriminator(cfg, rng, dtype)
                     for cfg in (configs or default_resolutions())]

    def __call__(self, waveform: Tensor) -> DiscriminatorOutput:
        out = DiscriminatorOutput(scores=[], features=[])
        for sub in self.subs:
            score, feats = sub(waveform)
            out.scores.append(score)
            out.features.append(feats)
        return out
