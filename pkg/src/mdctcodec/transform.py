"""MDCT analysis/synthesis and mel-spectrogram extraction.

The lapped transform uses 50% overlap (frame shift = bin count = half the
frame length) with a half-sine window applied at analysis and synthesis,
which satisfies the Princen-Bradley condition and gives alias-cancelling
perfect reconstruction.

Framing convention: the input is right-padded with zeros to a whole number
of frame shifts (length ``T' = N * shift``), then half a frame of zeros is
prepended so the first sample is covered by two windowed frames.  The
spectrum has exactly ``N = ceil(T / shift)`` rows, and synthesis returns
``N * shift`` samples.  With N frames the final shift block is covered by
only one window, so reconstruction is exact on ``[0, (N-1) * shift)``; the
last block is attenuated.  Callers that need sample-exact tails keep the
original length in band (the bitstream header does).

All functions are pure; precomputed bases and filterbanks are immutable.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractError, InvalidConfigError
from .tensor import Tensor, apply_op


@dataclass(frozen=True)
class MdctConfig:
    """Framing geometry; the three fields are locked to shift = bins = length/2."""

    frame_length: int
    frame_shift: int
    bins: int

    def __post_init__(self):
        for name in ("frame_length", "frame_shift", "bins"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise InvalidConfigError(f"{name} must be a positive integer, got {v!r}")
        if not (self.frame_shift == self.bins == self.frame_length // 2
                and self.frame_length == 2 * self.bins):
            raise InvalidConfigError(
                "MDCT framing requires shift == bins == frame_length / 2, got "
                f"({self.frame_length}, {self.frame_shift}, {self.bins})")

    @classmethod
    def from_bins(cls, bins: int) -> "MdctConfig":
        return cls(frame_length=2 * bins, frame_shift=bins, bins=bins)


def make_window(bins: int) -> np.ndarray:
    """Half-sine analysis/synthesis window of length 2*bins.

    Satisfies w[l]^2 + w[l+bins]^2 == 1 for every l and is symmetric.
    """
    if bins < 1:
        raise InvalidConfigError(f"bins must be >= 1, got {bins}")
    l = np.arange(2 * bins, dtype=np.float64)
    return np.sin(np.pi * (l + 0.5) / (2 * bins))


@functools.lru_cache(maxsize=None)
def _window_cached(bins: int, dtype: str) -> np.ndarray:
    w = make_window(bins).astype(dtype)
    w.setflags(write=False)
    return w


@functools.lru_cache(maxsize=None)
def _basis_cached(bins: int, dtype: str) -> np.ndarray:
    """Cosine basis  B[l, k] = cos(pi/K * (l + 1/2 + K/2) * (k + 1/2)),  [2K, K]."""
    k = bins
    l_idx = np.arange(2 * k, dtype=np.float64)[:, None]
    k_idx = np.arange(k, dtype=np.float64)[None, :]
    basis = np.cos(np.pi / k * (l_idx + 0.5 + k / 2.0) * (k_idx + 0.5)).astype(dtype)
    basis.setflags(write=False)
    return basis

# Analysis carries no normalization and synthesis carries 1/K; with the
# half-sine window at both ends the round trip reproduces x/2, so synthesis
# is scaled by 2 (pinned by the round-trip tests).
SYNTHESIS_CALIBRATION = 2.0


def num_frames(num_samples: int, frame_shift: int) -> int:
    return -(-num_samples // frame_shift)


# ---------------------------------------------------------------------------
# framing kernels (shared by the numpy and autodiff paths; the gather and
# scatter operations are exact adjoints of each other)
# ---------------------------------------------------------------------------

def _gather_frames(x: np.ndarray, n: int, frame_len: int, hop: int) -> np.ndarray:
    s0, s1 = x.strides
    view = as_strided(x, shape=(x.shape[0], n, frame_len), strides=(s0, hop * s1, s1))
    return view.copy()


def _scatter_frames(frames: np.ndarray, hop: int, out_len: int) -> np.ndarray:
    b, n, frame_len = frames.shape
    out = np.zeros((b, out_len), dtype=frames.dtype)
    if n == 0:
        return out
    # chunk the frame axis into hop-sized strips: within one strip the n
    # destination slices are disjoint, so a strided in-place add is safe
    for t0 in range(0, frame_len, hop):
        w = min(hop, frame_len - t0)
        seg = out[:, t0:t0 + (n - 1) * hop + w]
        s0, s1 = seg.strides
        view = as_strided(seg, shape=(b, n, w), strides=(s0, hop * s1, s1))
        view += frames[:, :, t0:t0 + w]
    return out


def frame_signal_t(x: Tensor, n: int, frame_len: int, hop: int) -> Tensor:
    padded_len = x.shape[1]
    value = _gather_frames(x.data, n, frame_len, hop)
    return apply_op(value, (x,),
                    lambda g: (_scatter_frames(g, hop, padded_len),))


def overlap_add_t(frames: Tensor, hop: int, out_len: int) -> Tensor:
    n, frame_len = frames.shape[1], frames.shape[2]
    value = _scatter_frames(frames.data, hop, out_len)
    return apply_op(value, (frames,),
                    lambda g: (_gather_frames(g, n, frame_len, hop),))


def _analysis_padding(t: int, shift: int) -> tuple[int, int, int]:
    """(n_frames, left_pad, right_pad) so padded length == (n + 1) * shift."""
    n = num_frames(t, shift)
    return n, shift, n * shift - t


# ---------------------------------------------------------------------------
# numpy fast path
# ---------------------------------------------------------------------------

def mdct(x: np.ndarray, cfg: MdctConfig) -> np.ndarray:
    """MDCT spectrum of `x`; accepts [T] or [B, T], returns [N, K] or [B, N, K]."""
    x = np.asarray(x, dtype=np.float64 if not np.issubdtype(
        np.asarray(x).dtype, np.floating) else None)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2:
        raise ContractError(f"waveform must be 1-D or 2-D, got shape {x.shape}")
    k = cfg.bins
    n, left, right = _analysis_padding(xb.shape[1], cfg.frame_shift)
    padded = np.pad(xb, ((0, 0), (left, right)))
    frames = _gather_frames(padded, n, cfg.frame_length, cfg.frame_shift)
    dtype = padded.dtype.name
    out = (frames * _window_cached(k, dtype)) @ _basis_cached(k, dtype)
    return out[0] if single else out


def imdct(spectrum: np.ndarray, cfg: MdctConfig) -> np.ndarray:
    """Inverse MDCT with windowed overlap-add; [N, K] -> [N*shift] samples."""
    spec = np.asarray(spectrum, dtype=np.float64 if not np.issubdtype(
        np.asarray(spectrum).dtype, np.floating) else None)
    single = spec.ndim == 2
    sb = spec[None] if single else spec
    if sb.ndim != 3 or sb.shape[2] != cfg.bins:
        raise ContractError(
            f"spectrum must be [N, {cfg.bins}] or [B, N, {cfg.bins}], got {spec.shape}")
    k = cfg.bins
    n = sb.shape[1]
    dtype = sb.dtype.name
    scale = SYNTHESIS_CALIBRATION / k
    frames = (sb @ _basis_cached(k, dtype).T) * (_window_cached(k, dtype) * scale)
    out = _scatter_frames(frames, cfg.frame_shift, (n + 1) * k)[:, k:]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# autodiff path (identical arithmetic, used wherever gradients must flow)
# ---------------------------------------------------------------------------

def mdct_t(x: Tensor, cfg: MdctConfig) -> Tensor:
    """Differentiable MDCT; input [B, T], output [B, N, K]."""
    if x.ndim != 2:
        raise ContractError(f"mdct_t expects [B, T], got shape {x.shape}")
    k = cfg.bins
    dtype = x.dtype.name
    n, left, right = _analysis_padding(x.shape[1], cfg.frame_shift)
    padded = x.pad(((0, 0), (left, right)))
    frames = frame_signal_t(padded, n, cfg.frame_length, cfg.frame_shift)
    return (frames * _window_cached(k, dtype)) @ Tensor(_basis_cached(k, dtype))


def imdct_t(spectrum: Tensor, cfg: MdctConfig) -> Tensor:
    """Differentiable inverse MDCT; input [B, N, K], output [B, N*shift]."""
    if spectrum.ndim != 3 or spectrum.shape[2] != cfg.bins:
        raise ContractError(
            f"imdct_t expects [B, N, {cfg.bins}], got shape {spectrum.shape}")
    k = cfg.bins
    n = spectrum.shape[1]
    dtype = spectrum.dtype.name
    scale = SYNTHESIS_CALIBRATION / k
    frames = (spectrum @ Tensor(_basis_cached(k, dtype).T.copy())) \
        * (_window_cached(k, dtype) * scale)
    return overlap_add_t(frames, cfg.frame_shift, (n + 1) * k)[:, k:]


# ---------------------------------------------------------------------------
# mel spectrogram
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MelConfig:
    """Log-mel extraction parameters (HTK mel scale, periodic Hann window).

    `hop` must equal the codec frame shift so mel rows line up with MDCT rows.
    """

    sample_rate: int = 48000
    fft_size: int = 1024
    hop: int = 40
    mel_bins: int = 80
    f_min: float = 0.0
    f_max: float = 24000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.fft_size < 2 or self.hop < 1 or self.mel_bins < 1:
            raise InvalidConfigError("fft_size, hop and mel_bins must be positive")
        if self.sample_rate <= 0:
            raise InvalidConfigError("sample_rate must be positive")
        if self.f_max > self.sample_rate / 2:
            raise InvalidConfigError(
                f"f_max {self.f_max} exceeds Nyquist {self.sample_rate / 2}")
        if not 0 <= self.f_min < self.f_max:
            raise InvalidConfigError("need 0 <= f_min < f_max")
        if self.log_floor <= 0:
            raise InvalidConfigError("log_floor must be positive")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=None)
def _mel_filterbank_cached(cfg: MelConfig, dtype: str) -> np.ndarray:
    n_bins = cfg.fft_size // 2 + 1
    freqs = np.arange(n_bins, dtype=np.float64) * cfg.sample_rate / cfg.fft_size
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max),
                                  cfg.mel_bins + 2))
    lo, center, hi = edges[:-2], edges[1:-1], edges[2:]
    up = (freqs[:, None] - lo[None, :]) / np.maximum(center - lo, 1e-12)[None, :]
    down = (hi[None, :] - freqs[:, None]) / np.maximum(hi - center, 1e-12)[None, :]
    fb = np.maximum(0.0, np.minimum(up, down)).astype(dtype)
    fb.setflags(write=False)
    return fb


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular filters as a [fft_bins, mel_bins] matrix (peak value 1)."""
    return _mel_filterbank_cached(cfg, "float64")


@functools.lru_cache(maxsize=None)
def _dft_bases_cached(fft_size: int, dtype: str) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(fft_size, dtype=np.float64)[:, None]
    f = np.arange(fft_size // 2 + 1, dtype=np.float64)[None, :]
    ang = 2.0 * np.pi * t * f / fft_size
    cos_b, sin_b = np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)
    cos_b.setflags(write=False)
    sin_b.setflags(write=False)
    return cos_b, sin_b


@functools.lru_cache(maxsize=None)
def _hann_cached(fft_size: int, dtype: str) -> np.ndarray:
    n = np.arange(fft_size, dtype=np.float64)
    w = (0.5 - 0.5 * np.cos(2.0 * np.pi * n / fft_size)).astype(dtype)
    w.setflags(write=False)
    return w


def mel_spectrogram_t(x: Tensor, cfg: MelConfig) -> Tensor:
    """Differentiable log-mel spectrogram; [B, T] -> [B, N, mel_bins].

    Frames are centered on multiples of `hop`, so N == ceil(T / hop) and
    lines up row-for-row with the codec's MDCT spectrum.
    """
    if x.ndim != 2:
        raise ContractError(f"mel_spectrogram_t expects [B, T], got {x.shape}")
    t_len = x.shape[1]
    if t_len == 0:
        raise ContractError("mel spectrogram of empty audio")
    dtype = x.dtype.name
    n = num_frames(t_len, cfg.hop)
    left = cfg.fft_size // 2
    right = max(0, (n - 1) * cfg.hop + cfg.fft_size - left - t_len)
    frames = frame_signal_t(x.pad(((0, 0), (left, right))), n, cfg.fft_size, cfg.hop)
    windowed = frames * _hann_cached(cfg.fft_size, dtype)
    cos_b, sin_b = _dft_bases_cached(cfg.fft_size, dtype)
    re = windowed @ Tensor(cos_b)
    im = windowed @ Tensor(sin_b)
    mag = (re.square() + im.square()).sqrt()
    mel = mag @ Tensor(_mel_filterbank_cached(cfg, dtype))
    return mel.maximum(cfg.log_floor).log()


def mel_spectrogram(x: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Log-mel spectrogram of a 1-D waveform; returns [N, mel_bins]."""
    from .tensor import no_grad

    x = np.asarray(x)
    if x.ndim != 1:
        raise ContractError(f"expected 1-D waveform, got shape {x.shape}")
    with no_grad():
        return mel_spectrogram_t(Tensor(x[None, :], dtype=np.float64), cfg).data[0]
