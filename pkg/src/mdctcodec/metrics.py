"""Objective quality metrics for decoded audio."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractError

LSD_FRAME = 2048
LSD_HOP = 512
LSD_FLOOR = 1e-7


def _magnitude_frames(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    if len(x) < frame:
        x = np.pad(x, (0, frame - len(x)))
    n = (len(x) - frame) // hop + 1
    s = x.strides[0]
    frames = as_strided(x, (n, frame), (hop * s, s)).copy()
    frames *= np.hanning(frame)
    return np.abs(np.fft.rfft(frames, axis=1))


def lsd(reference: np.ndarray, test: np.ndarray,
        frame: int = LSD_FRAME, hop: int = LSD_HOP,
        floor: float = LSD_FLOOR) -> float:
    """Log-spectral distance in dB, averaged over short-time frames.

    Per frame: sqrt(mean over bins of (20 * log10(|S_ref| / |S_test|))^2),
    with both magnitudes floored.  Symmetric in its arguments; identical
    inputs score exactly 0.
    """
    reference = np.asarray(reference, dtype=np.float64).reshape(-1)
    test = np.asarray(test, dtype=np.float64).reshape(-1)
    if reference.shape != test.shape:
        raise ContractError(
            f"signals must have equal length, got {len(reference)} and {len(test)}")
    ref_mag = np.maximum(_magnitude_frames(reference, frame, hop), floor)
    test_mag = np.maximum(_magnitude_frames(test, frame, hop), floor)
    log_ratio = 20.0 * np.log10(ref_mag / test_mag)
    return float(np.mean(np.sqrt(np.mean(log_ratio ** 2, axis=1))))
