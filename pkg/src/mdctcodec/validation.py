"""Input validation helpers used at the public API boundaries."""

from __future__ import annotations

import numpy as np

from .errors import ContractError, InvalidConfigError, SampleRateError


def check_waveform(x, name: str = "waveform", allow_empty: bool = True) -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ContractError(f"{name} must not be empty")
    if arr.size and not np.isfinite(arr).all():
        raise ContractError(f"{name} contains non-finite samples")
    return arr


def check_sample_rate(rate: int, expected: int | None = None) -> int:
    rate = int(rate)
    if rate <= 0:
        raise InvalidConfigError(f"sample rate must be positive, got {rate}")
    if expected is not None and rate != expected:
        raise SampleRateError(f"sample rate {rate} does not match configured {expected}")
    return rate


def check_tokens(tokens, num_quantizers: int, codebook_size: int) -> np.ndarray:
    arr = np.asarray(tokens)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ContractError(f"tokens must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64).reshape(-1, num_quantizers) if arr.size else \
        arr.astype(np.int64).reshape(0, num_quantizers)
    if arr.size and (arr.min() < 0 or arr.max() >= codebook_size):
        raise ContractError(f"token index outside [0, {codebook_size})")
    return arr
