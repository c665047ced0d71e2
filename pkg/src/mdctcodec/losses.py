"""Training objectives: hinge adversarial pair, feature matching, spectral
losses and the weighted generator total.

All expectations are means over score-map / feature-map elements and batch.
Targets (real features, natural spectra) are detached, so no gradient ever
reaches them.  The hinge and L1 kinks use subgradient zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvalidConfigError
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    mdct: float = 250.0
    mel: float = 45.0
    codebook: float = 10.0
    commitment: float = 0.25
    adversarial: float = 1.0
    feature_matching: float = 1.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise InvalidConfigError(f"loss weight {name} must be >= 0")


def generator_adversarial_loss(fake_scores: list[Tensor]) -> Tensor:
    """Sum over sub-discriminators of E[max(0, 1 - D(fake))]."""
    total = None
    for score in fake_scores:
        term = (1.0 - score).maximum(0.0).mean()
        total = term if total is None else total + term
    if total is None:
        raise ContractError("no score maps given")
    return total


def discriminator_adversarial_loss(real_scores: list[Tensor],
                                   fake_scores: list[Tensor]) -> Tensor:
    """Sum over sub-discriminators of E[max(0, 1 - D(real)) + max(0, 1 + D(fake))]."""
    if len(real_scores) != len(fake_scores) or not real_scores:
        raise ContractError("real/fake score lists must pair up")
    total = None
    for real, fake in zip(real_scores, fake_scores):
        term = (1.0 - real).maximum(0.0).mean() + (1.0 + fake).maximum(0.0).mean()
        total = term if total is None else total + term
    return total


def feature_matching_loss(real_features: list[list[Tensor]],
                          fake_features: list[list[Tensor]]) -> Tensor:
    """Per-element L1 between hidden maps, summed over layers and resolutions.

    Real maps are treated as constants; score maps are not included.
    """
    if len(real_features) != len(fake_features):
        raise ContractError("feature lists must have one entry per sub-discriminator")
    total = None
    for real_maps, fake_maps in zip(real_features, fake_features):
        if len(real_maps) != len(fake_maps):
            raise ContractError("feature map counts differ between real and fake")
        for real, fake in zip(real_maps, fake_maps):
            if real.shape != fake.shape:
                raise ContractError(
                    f"feature map shapes differ: {real.shape} vs {fake.shape}")
            term = (fake - real.detach()).abs().mean()
            total = term if total is None else total + term
    if total is None:
        raise ContractError("no feature maps given")
    return total


def mdct_loss(decoded: Tensor, target: Tensor) -> Tensor:
    """Per-element MSE between decoded and natural MDCT spectra."""
    if decoded.shape != target.shape:
        raise ContractError(f"spectrum shapes differ: {decoded.shape} vs {target.shape}")
    return (decoded - target.detach()).square().mean()


def mel_loss(decoded: Tensor, target: Tensor) -> Tensor:
    """Per-element MAE plus MSE between log-mel spectrograms."""
    if decoded.shape != target.shape:
        raise ContractError(f"mel shapes differ: {decoded.shape} vs {target.shape}")
    diff = decoded - target.detach()
    return diff.abs().mean() + diff.square().mean()


@dataclass
class GeneratorLossParts:
    adversarial: Tensor
    feature_matching: Tensor
    mdct: Tensor
    mel: Tensor
    codebook: Tensor
    commitment: Tensor

    def as_dict(self) -> dict[str, float]:
        return {name: float(value.data) for name, value in vars(self).items()}


def total_generator_loss(parts: GeneratorLossParts, weights: LossWeights) -> Tensor:
    """Weighted sum; a zero weight drops that term from the graph entirely,
    so with every weight zero the result is a plain constant."""
    pairs = (
        (parts.adversarial, weights.adversarial),
        (parts.feature_matching, weights.feature_matching),
        (parts.mdct, weights.mdct),
        (parts.mel, weights.mel),
        (parts.codebook, weights.codebook),
        (parts.commitment, weights.commitment),
    )
    total = None
    for part, weight in pairs:
        if weight == 0.0:
            continue
        term = part if weight == 1.0 else part * weight
        total = term if total is None else total + term
    return Tensor(0.0) if total is None else total
