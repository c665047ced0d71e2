"""Alternating GAN training loop, optimizer, data ingestion and checkpoints.

Each step first updates the discriminator on real audio versus a decoded
batch produced without gradients, then updates the generator (encoder,
codebooks, decoder) on the full weighted objective with the discriminator
frozen.  All randomness flows through one generator whose state is captured
in checkpoints, so a resumed run reproduces the uninterrupted trajectory
bit for bit.

Checkpoint container (little-endian): magic ``MDCK``, version u16,
config fingerprint (16 bytes), step/epoch/cursor u64, epoch order array,
JSON RNG state, the flat config text, then name-keyed tensor entries
(name, dtype code, shape, raw values) and a trailing SHA-256 over
everything before it.  Parameter names are the dotted module paths, e.g.
``generator.encoder.blocks.0.dwconv.weight``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio_io import read_wav
from .config import CodecConfig
from .discriminator import MultiResolutionMdctDiscriminator
from .errors import (ContractError, FingerprintMismatchError, IntegrityError,
                     InvalidConfigError, NonFiniteLossError)
from .losses import (GeneratorLossParts, discriminator_adversarial_loss,
                     feature_matching_loss, generator_adversarial_loss,
                     mdct_loss, mel_loss, total_generator_loss)
from .model import Generator
from .quantizer import ResidualVectorQuantizer
from .tensor import Tensor, no_grad
from .transform import imdct_t, mdct, mel_spectrogram_t

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MDCK"
CHECKPOINT_VERSION = 1
_DTYPE_CODES = {"float64": 0, "float32": 1, "int64": 2}
_CODE_DTYPES = {0: "<f8", 1: "<f4", 2: "<i8"}


def lr_schedule(initial_lr: float, decay_per_epoch: float, epoch: int) -> float:
    """Learning rate after `epoch` whole passes: initial * decay^epoch."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return initial_lr * decay_per_epoch ** epoch


class AdamW:
    """Decoupled-weight-decay Adam with bias correction.

    The decay multiplies parameters by (1 - lr * wd) before the moment
    update, so zero gradients with nonzero decay still shrink weights.
    """

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.8,
                 beta2: float = 0.99, eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.beta1, self.beta2 = beta1, beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            grad = p.grad
            if self.weight_decay:
                p.data *= 1.0 - lr * self.weight_decay
            if grad is None:
                grad = 0.0
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(grad)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# ---------------------------------------------------------------------------
# data ingestion
# ---------------------------------------------------------------------------

class AudioCorpus:
    """A list of mono waveforms at the configured rate, croppable at random."""

    def __init__(self, waveforms: Sequence[np.ndarray], names: Sequence[str] | None = None):
        self.items = [np.asarray(w, dtype=np.float64).reshape(-1) for w in waveforms]
        self.names = list(names) if names is not None else [
            f"<memory:{i}>" for i in range(len(self.items))]
        if not self.items:
            raise InvalidConfigError("corpus contains no usable audio")

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def from_directory(cls, directory: str | Path, sample_rate: int) -> "AudioCorpus":
        directory = Path(directory)
        waves, names = [], []
        for path in sorted(directory.glob("*.wav")):
            try:
                samples, rate = read_wav(path)
            except Exception as exc:  # unreadable file: skip, keep going
                log.warning("skipping unreadable %s: %s", path.name, exc)
                continue
            if rate != sample_rate:
                log.warning("skipping %s: sample rate %d != %d",
                            path.name, rate, sample_rate)
                continue
            waves.append(samples)
            names.append(path.name)
        return cls(waves, names)

    def crop(self, index: int, segment: int, rng: np.random.Generator) -> np.ndarray:
        wave = self.items[index]
        if len(wave) <= segment:
            return np.pad(wave, (0, segment - len(wave)))
        start = int(rng.integers(0, len(wave) - segment + 1))
        return wave[start:start + segment]


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------

class Trainer:
    def __init__(self, config: CodecConfig,
                 corpus: Optional[AudioCorpus] = None):
        self.config = config
        self.corpus = corpus
        self.rng = np.random.default_rng(config.seed)
        dtype = config.np_dtype()
        self.generator = Generator(config.model_config(), self.rng, dtype)
        self.discriminator = MultiResolutionMdctDiscriminator(
            self.rng, config.disc_configs(), dtype)
        self.quantizer = ResidualVectorQuantizer(config.rvq_config(), self.rng, dtype)
        self.weights = config.loss_weights()
        self._mdct_cfg = config.mdct_config()
        self._mel_cfg = config.mel_config()
        self.opt_g = AdamW(self._generator_params(), config.beta1, config.beta2,
                           config.adam_eps, config.weight_decay)
        self.opt_d = AdamW(self._discriminator_params(), config.beta1, config.beta2,
                           config.adam_eps, config.weight_decay)
        self.step_count = 0
        self.epoch = 0
        self._epoch_order: Optional[np.ndarray] = None
        self._cursor = 0

    # -- parameter registries ------------------------------------------------

    def _generator_params(self) -> dict[str, Tensor]:
        params = {f"generator.{k}": p for k, p in self.generator.named_parameters()}
        params.update({f"quantizer.{k}": p
                       for k, p in self.quantizer.named_parameters()})
        return params

    def _discriminator_params(self) -> dict[str, Tensor]:
        return {f"discriminator.{k}": p
                for k, p in self.discriminator.named_parameters()}

    # -- schedule and data -----------------------------------------------------

    def current_lr(self) -> float:
        return lr_schedule(self.config.learning_rate,
                           self.config.lr_decay_per_epoch, self.epoch)

    def next_batch(self) -> np.ndarray:
        """The next batch of crops; advances the epoch when the list runs out."""
        if self.corpus is None:
            raise ContractError("trainer has no corpus to draw batches from")
        batch = self.config.batch_size
        if self._epoch_order is None:
            self._epoch_order = self.rng.permutation(len(self.corpus))
            self._cursor = 0
        if self._cursor + batch > len(self._epoch_order):
            self.epoch += 1
            self._epoch_order = self.rng.permutation(len(self.corpus))
            self._cursor = 0
        indices = self._epoch_order[self._cursor:self._cursor + batch]
        self._cursor += batch
        segment = self.config.effective_segment
        return np.stack([self.corpus.crop(int(i), segment, self.rng)
                         for i in indices])

    # -- the step ------------------------------------------------------------------

    def train_step(self, batch: Optional[np.ndarray] = None) -> dict[str, float]:
        """One discriminator update followed by one generator update."""
        cfg = self.config
        if batch is None:
            batch = self.next_batch()
        batch = np.asarray(batch, dtype=cfg.np_dtype())
        if batch.ndim != 2 or batch.shape[1] % cfg.token_hop:
            raise ContractError(
                f"batch must be [B, T] with T a multiple of {cfg.token_hop}, "
                f"got {batch.shape}")
        lr = self.current_lr()
        x = Tensor(batch)
        spectrum = Tensor(mdct(batch, self._mdct_cfg).astype(cfg.np_dtype()))

        if not self.quantizer.initialized:
            with no_grad():
                latents = self.generator.encoder(spectrum)
            self.quantizer.kmeans_init(latents.data, self.rng,
                                       cfg.kmeans_iterations)

        use_disc = (self.weights.adversarial > 0.0
                    or self.weights.feature_matching > 0.0)
        metrics: dict[str, float] = {}
        self.generator.zero_grad()
        self.quantizer.zero_grad()
        self.discriminator.zero_grad()

        # discriminator update on a gradient-free decode
        if use_disc:
            with no_grad():
                code = self.generator.encoder(spectrum)
                decoded = self.generator.decoder(self.quantizer.quantize(code).quantized)
                fake_wave = imdct_t(decoded, self._mdct_cfg)
            real_out = self.discriminator(x)
            fake_out = self.discriminator(fake_wave)
            d_loss = discriminator_adversarial_loss(real_out.scores, fake_out.scores)
            _check_finite("discriminator_adversarial", d_loss)
            metrics["loss_disc"] = float(d_loss.data)
            if self.weights.adversarial > 0.0:
                d_loss.backward()
                self.opt_d.step(lr)
                self._assert_no_grads(self._generator_params(), "generator")
                self.discriminator.zero_grad()

        # generator update with the discriminator frozen
        self.discriminator.set_trainable(False)
        try:
            code = self.generator.encoder(spectrum)
            quant = self.quantizer.quantize(code)
            decoded = self.generator.decoder(quant.quantized)
            fake_wave = imdct_t(decoded, self._mdct_cfg)
            with no_grad():
                mel_target = mel_spectrogram_t(x, self._mel_cfg)
            mel_decoded = mel_spectrogram_t(fake_wave, self._mel_cfg)

            zero = Tensor(0.0)
            if use_disc:
                # both feature passes use the post-update discriminator weights
                with no_grad():
                    real_out = self.discriminator(x)
                fake_out = self.discriminator(fake_wave)
                adv = generator_adversarial_loss(fake_out.scores)
                fm = feature_matching_loss(real_out.features, fake_out.features)
            else:
                adv, fm = zero, zero
            parts = GeneratorLossParts(
                adversarial=adv,
                feature_matching=fm,
                mdct=mdct_loss(decoded, spectrum),
                mel=mel_loss(mel_decoded, mel_target),
                codebook=quant.codebook_loss,
                commitment=quant.commitment_loss,
            )
            for name, value in parts.as_dict().items():
                _check_finite(name, value)
                metrics[f"loss_{name}"] = value
            g_loss = total_generator_loss(parts, self.weights)
            metrics["loss_gen"] = float(g_loss.data)
            if g_loss._parents is not None:
                g_loss.backward()
                self.opt_g.step(lr)
                self._assert_no_grads(self._discriminator_params(), "discriminator")
        finally:
            self.discriminator.set_trainable(True)

        metrics["revived_codes"] = float(self.quantizer.observe_usage(
            quant.tokens, quant.stage_residuals, self.rng, cfg.revival_patience))
        self.step_count += 1
        metrics["step"] = float(self.step_count)
        metrics["epoch"] = float(self.epoch)
        metrics["lr"] = lr
        return metrics

    @staticmethod
    def _assert_no_grads(params: dict[str, Tensor], side: str) -> None:
        for name, p in params.items():
            if p.grad is not None and np.any(p.grad):
                raise ContractError(
                    f"alternation contract broken: {side} parameter {name} "
                    "received gradients on the frozen side")

    def run(self, num_steps: int, metrics_path: str | Path | None = None,
            checkpoint_dir: str | Path | None = None) -> list[dict[str, float]]:
        """Run `num_steps` steps, appending key=value metric lines if asked."""
        records = []
        sink = open(metrics_path, "a") if metrics_path else None
        try:
            for _ in range(num_steps):
                record = self.train_step()
                records.append(record)
                if sink:
                    line = " ".join(f"{k}={record[k]:.10g}"
                                    for k in sorted(record) if k != "step")
                    sink.write(f"step={int(record['step'])} {line}\n")
                    sink.flush()
                if checkpoint_dir and self.step_count % self.config.checkpoint_every == 0:
                    path = Path(checkpoint_dir) / f"step_{self.step_count:08d}.ckpt"
                    self.save_checkpoint(path)
                    log.info("checkpoint written: %s", path)
        finally:
            if sink:
                sink.close()
        return records

    # -- checkpointing -----------------------------------------------------------

    def _all_entries(self) -> dict[str, np.ndarray]:
        entries: dict[str, np.ndarray] = {}
        for name, p in self._generator_params().items():
            entries[name] = p.data
        for name, p in self._discriminator_params().items():
            entries[name] = p.data
        for prefix, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            entries[f"{prefix}.step"] = np.asarray(opt.step_count, dtype=np.int64)
            for key, value in opt.m.items():
                entries[f"{prefix}.m.{key}"] = value
            for key, value in opt.v.items():
                entries[f"{prefix}.v.{key}"] = value
        for q, book in enumerate(self.quantizer.books):
            entries[f"quantizer.books.{q}.usage"] = book.usage
            entries[f"quantizer.books.{q}.steps_since_use"] = book.steps_since_use
        entries["quantizer.initialized"] = np.asarray(
            int(self.quantizer.initialized), dtype=np.int64)
        return entries

    def save_checkpoint(self, path: str | Path) -> None:
        """Write the full training state; byte-identical for identical states."""
        out = bytearray()
        out += CHECKPOINT_MAGIC
        out += struct.pack("<H", CHECKPOINT_VERSION)
        out += self.config.fingerprint()
        order = (self._epoch_order if self._epoch_order is not None
                 else np.empty(0, dtype=np.int64)).astype("<i8")
        out += struct.pack("<QQQ", self.step_count, self.epoch, self._cursor)
        out += struct.pack("<I", order.size) + order.tobytes()
        rng_state = json.dumps(self.rng.bit_generator.state, sort_keys=True).encode()
        out += struct.pack("<I", len(rng_state)) + rng_state
        config_text = self.config.to_text().encode()
        out += struct.pack("<I", len(config_text)) + config_text
        entries = self._all_entries()
        out += struct.pack("<I", len(entries))
        for name, array in entries.items():
            blob = name.encode()
            arr = np.ascontiguousarray(array)
            code = _DTYPE_CODES[arr.dtype.name]
            out += struct.pack("<H", len(blob)) + blob
            out += struct.pack("<BB", code, arr.ndim)
            out += struct.pack(f"<{arr.ndim}I", *arr.shape)
            out += arr.astype(_CODE_DTYPES[code]).tobytes()
        out += hashlib.sha256(bytes(out)).digest()
        Path(path).write_bytes(bytes(out))

    @classmethod
    def load_checkpoint(cls, path: str | Path,
                        config: Optional[CodecConfig] = None,
                        corpus: Optional[AudioCorpus] = None,
                        force: bool = False) -> "Trainer":
        """Rebuild a trainer from a checkpoint; refuses foreign configs unless forced."""
        raw = Path(path).read_bytes()
        if len(raw) < 38 or raw[:4] != CHECKPOINT_MAGIC:
            raise IntegrityError(f"{path}: not a checkpoint file")
        body, digest = raw[:-32], raw[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise IntegrityError(f"{path}: checksum mismatch, file is corrupt")
        off = 4
        (version,) = struct.unpack_from("<H", body, off)
        off += 2
        if version != CHECKPOINT_VERSION:
            raise IntegrityError(f"{path}: unsupported checkpoint version {version}")
        fingerprint = body[off:off + 16]
        off += 16
        step, epoch, cursor = struct.unpack_from("<QQQ", body, off)
        off += 24
        (order_len,) = struct.unpack_from("<I", body, off)
        off += 4
        order = np.frombuffer(body, "<i8", order_len, off).copy()
        off += 8 * order_len
        (rng_len,) = struct.unpack_from("<I", body, off)
        off += 4
        rng_state = json.loads(body[off:off + rng_len])
        off += rng_len
        (cfg_len,) = struct.unpack_from("<I", body, off)
        off += 4
        config_text = body[off:off + cfg_len].decode()
        off += cfg_len

        embedded = CodecConfig.from_text(config_text)
        if config is None:
            config = embedded
        if config.fingerprint() != fingerprint and not force:
            raise FingerprintMismatchError(
                f"{path}: checkpoint was produced under a different configuration "
                "(pass force=True / --force to override)")

        trainer = cls(config, corpus=corpus)
        trainer.step_count = step
        trainer.epoch = epoch
        trainer._cursor = cursor
        trainer._epoch_order = order if order_len else None
        trainer.rng.bit_generator.state = rng_state

        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        entries = trainer._all_entries()
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + name_len].decode()
            off += name_len
            code, ndim = struct.unpack_from("<BB", body, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", body, off)
            off += 4 * ndim
            n_items = int(np.prod(shape)) if ndim else 1
            values = np.frombuffer(body, _CODE_DTYPES[code], n_items, off).reshape(shape)
            off += values.nbytes
            if name not in entries:
                raise IntegrityError(f"{path}: unexpected tensor entry {name!r}")
            target = entries[name]
            if target.shape != values.shape:
                raise IntegrityError(
                    f"{path}: shape mismatch for {name}: {values.shape} vs {target.shape}")
            target[...] = values.astype(target.dtype, copy=False).reshape(target.shape)
        trainer.opt_g.step_count = int(entries["opt_g.step"])
        trainer.opt_d.step_count = int(entries["opt_d.step"])
        trainer.quantizer.initialized = bool(int(entries["quantizer.initialized"]))
        return trainer


def _check_finite(component: str, value) -> None:
    v = float(value.data) if isinstance(value, Tensor) else float(value)
    if not math.isfinite(v):
        raise NonFiniteLossError(component, v)
