"""Residual vector quantization of latent codes plus bitrate arithmetic.

Each stage picks the nearest (Euclidean) codebook vector for the running
residual, emits its index and subtracts it.  The quantized output value is
the exact sum of the selected vectors while its gradient passes straight
through to the input (identity Jacobian).  Codebooks are trained by the
codebook loss; the commitment loss pulls the encoder toward the codebooks.
Both losses are averaged over stages and elements.

Codebooks are k-means initialized from the first training batch and entries
unused for too many consecutive steps are re-seeded from current residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CorruptStreamError, InvalidConfigError, ShapeError
from .layers import Module, Parameter
from .tensor import Tensor, apply_op

REVIVAL_PATIENCE = 200


def bitrate_bps(sample_rate: float, frame_shift: int, downsample_rate: int,
                num_quantizers: int, codebook_size: int) -> float:
    """Token bitrate in bits per second: S / (W_S * R) * Q * log2(M)."""
    if min(sample_rate, frame_shift, downsample_rate, num_quantizers) <= 0:
        raise InvalidConfigError("bitrate inputs must all be positive")
    if codebook_size < 2:
        raise InvalidConfigError(f"codebook size must be >= 2, got {codebook_size}")
    return sample_rate / (frame_shift * downsample_rate) \
        * num_quantizers * math.log2(codebook_size)


@dataclass(frozen=True)
class RvqConfig:
    num_quantizers: int = 4
    codebook_size: int = 1024
    code_dim: int = 32

    def __post_init__(self):
        if self.num_quantizers < 1:
            raise InvalidConfigError("need at least one quantizer stage")
        m = self.codebook_size
        if m < 2 or (m & (m - 1)) != 0:
            raise InvalidConfigError(
                f"codebook size must be a power of two >= 2, got {m}")
        if self.code_dim < 1:
            raise InvalidConfigError("code_dim must be >= 1")

    @property
    def bits_per_index(self) -> int:
        return self.codebook_size.bit_length() - 1


def gather_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup table[indices]; backward scatter-adds into the table."""
    idx = np.asarray(indices)
    shape = table.shape

    def backward(g):
        buf = np.zeros(shape, dtype=g.dtype)
        np.add.at(buf, idx, g)
        return (buf,)

    return apply_op(table.data[idx], (table,), backward)


class Codebook(Module):
    def __init__(self, size: int, dim: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.vectors = Parameter(rng.normal(0.0, 0.02, (size, dim)), dtype=dtype)
        self.usage = np.zeros(size, dtype=np.int64)
        self.steps_since_use = np.zeros(size, dtype=np.int64)

    def nearest(self, residual: np.ndarray) -> np.ndarray:
        v = self.vectors.data
        if not np.isfinite(v).all():
            raise InvalidConfigError("codebook contains non-finite entries")
        dist = (residual * residual).sum(1, keepdims=True) \
            - 2.0 * residual @ v.T + (v * v).sum(1)[None, :]
        return np.argmin(dist, axis=1)  # ties resolve to the lowest index


@dataclass
class QuantizeResult:
    tokens: np.ndarray              # [..., Q] stage indices
    quantized: Tensor               # same shape as the input, straight-through
    codebook_loss: Tensor
    commitment_loss: Tensor
    stage_energies: np.ndarray      # [Q + 1] mean-square residual, input first
    stage_residuals: list[np.ndarray]  # per-stage input residuals (values only)


class ResidualVectorQuantizer(Module):
    def __init__(self, cfg: RvqConfig, rng: np.random.Generator,
                 dtype=np.float64):
        self.cfg = cfg
        self.dtype = dtype
        self.books = [Codebook(cfg.codebook_size, cfg.code_dim, rng, dtype)
                      for _ in range(cfg.num_quantizers)]
        self.initialized = False

    # -- training-time paths -------------------------------------------------

    def quantize(self, code: Tensor) -> QuantizeResult:
        if code.shape[-1] != self.cfg.code_dim:
            raise ShapeError(
                f"expected trailing dim {self.cfg.code_dim}, got {code.shape}")
        if self.cfg.codebook_size == 0 or not self.books:
            raise InvalidConfigError("empty codebook")
        lead = code.shape[:-1]
        n = int(np.prod(lead)) if lead else 1
        flat = code.reshape(n, self.cfg.code_dim)
        values = flat.data
        if n == 0:
            zero = Tensor(np.zeros((), dtype=values.dtype))
            return QuantizeResult(
                tokens=np.empty(lead + (self.cfg.num_quantizers,), dtype=np.int64),
                quantized=code,
                codebook_loss=zero,
                commitment_loss=zero,
                stage_energies=np.zeros(self.cfg.num_quantizers + 1),
                stage_residuals=[values.copy() for _ in self.books],
            )

        energies = [float((values * values).mean()) if values.size else 0.0]
        tokens = np.empty((n, self.cfg.num_quantizers), dtype=np.int64)
        residual = values.copy()
        approx = np.zeros_like(values)
        cb_loss = com_loss = None
        residual_values: list[np.ndarray] = []

        for q, book in enumerate(self.books):
            residual_values.append(residual.copy())
            idx = book.nearest(residual) if n else np.empty(0, dtype=np.int64)
            tokens[:, q] = idx
            selected = book.vectors.data[idx]

            residual_t = flat - Tensor(approx)           # gradient -> encoder
            selected_t = gather_rows(book.vectors, idx)  # gradient -> codebook
            cb_q = (selected_t - Tensor(residual)).square().mean()
            com_q = (residual_t - Tensor(selected)).square().mean()
            cb_loss = cb_q if cb_loss is None else cb_loss + cb_q
            com_loss = com_q if com_loss is None else com_loss + com_q

            approx = approx + selected
            residual = residual - selected
            energies.append(float((residual * residual).mean()) if n else 0.0)

        quantized = (flat + Tensor(approx - values)).reshape(*lead, self.cfg.code_dim)
        inv_q = 1.0 / self.cfg.num_quantizers
        return QuantizeResult(
            tokens=tokens.reshape(*lead, self.cfg.num_quantizers),
            quantized=quantized,
            codebook_loss=cb_loss * inv_q,
            commitment_loss=com_loss * inv_q,
            stage_energies=np.asarray(energies),
            stage_residuals=residual_values,
        )

    def dequantize(self, tokens: np.ndarray) -> np.ndarray:
        """Sum the indexed vectors; the exact value path of `quantize`."""
        tokens = np.asarray(tokens)
        if tokens.ndim < 1 or tokens.shape[-1] != self.cfg.num_quantizers:
            raise ShapeError(
                f"expected [..., {self.cfg.num_quantizers}] tokens, got {tokens.shape}")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.cfg.codebook_size):
            raise CorruptStreamError(
                f"token index outside [0, {self.cfg.codebook_size})")
        out = np.zeros(tokens.shape[:-1] + (self.cfg.code_dim,), dtype=self.dtype)
        for q, book in enumerate(self.books):
            out = out + book.vectors.data[tokens[..., q]]
        return out

    # -- codebook lifecycle -------------------------------------------------

    def kmeans_init(self, latents: np.ndarray, rng: np.random.Generator,
                    iterations: int = 10) -> None:
        """Seed each stage's codebook with k-means over that stage's residuals."""
        data = np.asarray(latents, dtype=np.float64).reshape(-1, self.cfg.code_dim)
        if data.shape[0] == 0:
            raise InvalidConfigError("cannot initialize codebooks from zero latents")
        residual = data.copy()
        for book in self.books:
            centers = _kmeans(residual, self.cfg.codebook_size, rng, iterations)
            book.vectors.data[...] = centers.astype(self.dtype)
            residual = residual - centers[book.nearest(residual.astype(self.dtype))]
        self.initialized = True

    def observe_usage(self, tokens: np.ndarray,
                      stage_residuals: list[np.ndarray],
                      rng: np.random.Generator,
                      patience: int = REVIVAL_PATIENCE) -> int:
        """Update usage counters; revive entries unused for `patience` steps."""
        flat = np.asarray(tokens).reshape(-1, self.cfg.num_quantizers)
        revived = 0
        for q, book in enumerate(self.books):
            used, counts = np.unique(flat[:, q], return_counts=True)
            book.usage[used] += counts
            book.steps_since_use += 1
            book.steps_since_use[used] = 0
            dead = np.flatnonzero(book.steps_since_use >= patience)
            pool = stage_residuals[q]
            if dead.size and pool.shape[0]:
                picks = rng.integers(0, pool.shape[0], size=dead.size)
                book.vectors.data[dead] = pool[picks].astype(self.dtype)
                book.steps_since_use[dead] = 0
                revived += dead.size
        return revived

    def fingerprint(self) -> bytes:
        """16-byte digest tying streams to the codebooks that produced them."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.asarray([self.cfg.num_quantizers, self.cfg.codebook_size,
                             self.cfg.code_dim], dtype="<i8").tobytes())
        for book in self.books:
            h.update(np.ascontiguousarray(
                book.vectors.data.astype("<f8")).tobytes())
        return h.digest()[:16]


def _kmeans(data: np.ndarray, k: int, rng: np.random.Generator,
            iterations: int) -> np.ndarray:
    """Plain k-means with k-means++ seeding; deterministic given `rng`."""
    n, dim = data.shape
    if n < k:
        # fewer samples than centers: duplicate points with slight jitter
        scale = 1e-4 * (np.abs(data).mean() + 1e-8)
        picks = rng.integers(0, n, size=k)
        return data[picks] + rng.normal(0.0, scale, (k, dim))

    centers = np.empty((k, dim))
    centers[0] = data[rng.integers(0, n)]
    closest = ((data - centers[0]) ** 2).sum(1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[i:] = data[rng.integers(0, n, size=k - i)]
            break
        centers[i] = data[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, ((data - centers[i]) ** 2).sum(1))

    for _ in range(iterations):
        dist = (data * data).sum(1, keepdims=True) - 2.0 * data @ centers.T \
            + (centers * centers).sum(1)[None, :]
        assign = np.argmin(dist, axis=1)
        for i in range(k):
            members = assign == i
            if members.any():
                centers[i] = data[members].mean(0)
    return centers
