"""Bit-exact serialization of encoded audio.

Container layout (all integers little-endian):

    offset  size  field
    0       4     magic "MDC1"
    4       2     format version (u16)
    6       4     sample rate in Hz (u32)
    10      2     MDCT frame shift in samples (u16)
    12      2     encoder downsample rate (u16)
    14      1     quantizer stages Q (u8)
    15      1     bits per index log2(M) (u8)
    16      4     number of token frames (u32)
    20      8     original sample count (u64)
    28      16    codebook fingerprint
    44      ...   payload

The payload packs each index in exactly log2(M) bits, frame-major then
stage-major, most-significant bit first, zero-padded to a byte boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (ContractError, CorruptStreamError, InvalidConfigError,
                     TruncatedStreamError)

MAGIC = b"MDC1"
FORMAT_VERSION = 1
HEADER_SIZE = 44
_HEADER_FMT = "<4sHIHHBBIQ16s"


@dataclass(frozen=True)
class StreamHeader:
    sample_rate: int
    frame_shift: int
    downsample_rate: int
    num_quantizers: int
    bits_per_index: int
    num_token_frames: int
    original_sample_count: int
    codebook_fingerprint: bytes
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if not 1 <= self.bits_per_index <= 16:
            raise InvalidConfigError(
                f"bits_per_index must lie in [1, 16], got {self.bits_per_index}")
        if self.num_quantizers < 1 or self.num_quantizers > 255:
            raise InvalidConfigError("num_quantizers must lie in [1, 255]")
        if len(self.codebook_fingerprint) != 16:
            raise InvalidConfigError("codebook fingerprint must be 16 bytes")

    @property
    def codebook_size(self) -> int:
        return 1 << self.bits_per_index

    @property
    def payload_bits(self) -> int:
        return self.num_token_frames * self.num_quantizers * self.bits_per_index

    @property
    def payload_bytes(self) -> int:
        return (self.payload_bits + 7) // 8


def pack(tokens: np.ndarray, header: StreamHeader) -> bytes:
    """Serialize token frames under `header`; tokens are [frames, Q] ints."""
    tokens = np.asarray(tokens, dtype=np.int64).reshape(-1, header.num_quantizers)
    if tokens.shape[0] != header.num_token_frames:
        raise ContractError(
            f"header says {header.num_token_frames} frames, got {tokens.shape[0]}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= header.codebook_size):
        raise ContractError(
            f"token index outside [0, {header.codebook_size})")

    head = struct.pack(_HEADER_FMT, MAGIC, header.version, header.sample_rate,
                       header.frame_shift, header.downsample_rate,
                       header.num_quantizers, header.bits_per_index,
                       header.num_token_frames, header.original_sample_count,
                       header.codebook_fingerprint)

    bits_per = header.bits_per_index
    flat = tokens.reshape(-1)
    # expand every index to its bits (MSB first), then pack eight at a time
    shifts = np.arange(bits_per - 1, -1, -1, dtype=np.int64)
    bits = ((flat[:, None] >> shifts[None, :]) & 1).reshape(-1)
    payload = np.packbits(bits.astype(np.uint8)).tobytes()
    return head + payload


def unpack(data: bytes) -> tuple[StreamHeader, np.ndarray]:
    """Parse a container; exact inverse of :func:`pack`."""
    if len(data) < HEADER_SIZE:
        raise TruncatedStreamError(
            f"stream is {len(data)} bytes, shorter than the {HEADER_SIZE}-byte header")
    magic, version, rate, shift, down, nq, bits_per, frames, orig, fp = \
        struct.unpack_from(_HEADER_FMT, data, 0)
    if magic != MAGIC:
        raise CorruptStreamError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise CorruptStreamError(f"unsupported format version {version}")
    try:
        header = StreamHeader(sample_rate=rate, frame_shift=shift,
                              downsample_rate=down, num_quantizers=nq,
                              bits_per_index=bits_per, num_token_frames=frames,
                              original_sample_count=orig,
                              codebook_fingerprint=fp, version=version)
    except InvalidConfigError as exc:
        raise CorruptStreamError(f"invalid header: {exc}") from exc

    payload = data[HEADER_SIZE:]
    if len(payload) != header.payload_bytes:
        raise TruncatedStreamError(
            f"payload is {len(payload) * 8} bits, expected {header.payload_bits} "
            f"({header.payload_bytes} bytes)")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    used = header.payload_bits
    if bits[used:].any():
        raise CorruptStreamError("nonzero padding bits after the payload")
    shifts = np.arange(header.bits_per_index - 1, -1, -1, dtype=np.int64)
    values = (bits[:used].reshape(-1, header.bits_per_index).astype(np.int64)
              << shifts).sum(axis=1)
    return header, values.reshape(header.num_token_frames, header.num_quantizers)
