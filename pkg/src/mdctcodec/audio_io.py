"""Mono WAV reading and writing (PCM16 and float32 only)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import UnsupportedAudioError


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a mono WAV file as float64 samples in [-1, 1] plus its rate."""
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise UnsupportedAudioError(f"{path}: cannot read WAV: {exc}") from exc
    if data.ndim != 1:
        raise UnsupportedAudioError(
            f"{path}: only mono audio is supported, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedAudioError(
            f"{path}: unsupported sample format {data.dtype}; "
            "use 16-bit PCM or 32-bit float")
    return samples, int(rate)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono float32 WAV (values are stored as given, not rescaled)."""
    samples = np.asarray(samples, dtype=np.float32).reshape(-1)
    wavfile.write(str(path), int(sample_rate), samples)
