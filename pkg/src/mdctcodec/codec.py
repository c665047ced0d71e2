"""Top-level estimator: fit a codec on waveforms, then encode/decode audio.

`MDCTCodec` follows the scikit-learn estimator protocol (constructor
parameters stored verbatim, `get_params`/`set_params`, trailing-underscore
fitted state), so it clones and composes with the usual tooling.
`transform` maps waveforms to token arrays and `inverse_transform` maps
them back, which is the codec's natural transformer reading.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import bitstream
from .config import CodecConfig
from .errors import ContractError, FingerprintMismatchError
from .tensor import Tensor, no_grad
from .trainer import AudioCorpus, Trainer
from .transform import imdct, mdct
from .validation import check_tokens, check_waveform


class MDCTCodec(TransformerMixin, BaseEstimator):
    """MDCT-domain neural audio codec with residual vector quantization.

    Parameters mirror the flat codec configuration; anything not exposed
    here can be reached through `config_overrides`.  `fit` trains the
    adversarial codec on a corpus (a directory of WAV files or a sequence
    of 1-D sample arrays); `encode`/`decode` run the trained model.
    """

    def __init__(self, *, sample_rate: int = 48000, frame_shift: int = 40,
                 latent_dim: int = 32, downsample_rate: int = 8,
                 hidden_width: int = 256, block_intermediate: int = 512,
                 num_blocks: int = 8, kernel_size: int = 7,
                 num_quantizers: int = 4, codebook_size: int = 1024,
                 batch_size: int = 48, segment_samples: int = 7960,
                 learning_rate: float = 2e-4, max_steps: Optional[int] = None,
                 dtype: str = "float32", random_state: int = 0,
                 config_overrides: Optional[dict] = None):
        self.sample_rate = sample_rate
        self.frame_shift = frame_shift
        self.latent_dim = latent_dim
        self.downsample_rate = downsample_rate
        self.hidden_width = hidden_width
        self.block_intermediate = block_intermediate
        self.num_blocks = num_blocks
        self.kernel_size = kernel_size
        self.num_quantizers = num_quantizers
        self.codebook_size = codebook_size
        self.batch_size = batch_size
        self.segment_samples = segment_samples
        self.learning_rate = learning_rate
        self.max_steps = max_steps
        self.dtype = dtype
        self.random_state = random_state
        self.config_overrides = config_overrides

    # -- configuration ---------------------------------------------------------

    def build_config(self) -> CodecConfig:
        config = CodecConfig(
            sample_rate=self.sample_rate, frame_shift=self.frame_shift,
            latent_dim=self.latent_dim, downsample_rate=self.downsample_rate,
            hidden_width=self.hidden_width,
            block_intermediate=self.block_intermediate,
            num_blocks=self.num_blocks, kernel_size=self.kernel_size,
            num_quantizers=self.num_quantizers, codebook_size=self.codebook_size,
            batch_size=self.batch_size, segment_samples=self.segment_samples,
            learning_rate=self.learning_rate, dtype=self.dtype,
            seed=self.random_state,
            **({"total_steps": self.max_steps} if self.max_steps else {}))
        if self.config_overrides:
            overrides = {k: str(v) for k, v in self.config_overrides.items()}
            config = config.with_overrides(overrides)
        return config

    @classmethod
    def _from_config(cls, config: CodecConfig) -> "MDCTCodec":
        return cls(sample_rate=config.sample_rate, frame_shift=config.frame_shift,
                   latent_dim=config.latent_dim,
                   downsample_rate=config.downsample_rate,
                   hidden_width=config.hidden_width,
                   block_intermediate=config.block_intermediate,
                   num_blocks=config.num_blocks, kernel_size=config.kernel_size,
                   num_quantizers=config.num_quantizers,
                   codebook_size=config.codebook_size,
                   batch_size=config.batch_size,
                   segment_samples=config.segment_samples,
                   learning_rate=config.learning_rate,
                   max_steps=config.total_steps, dtype=config.dtype,
                   random_state=config.seed)

    # -- fitting ----------------------------------------------------------------

    def fit(self, X, y=None):
        """Train on a corpus: a WAV directory path or a sequence of waveforms."""
        config = self.build_config()
        if isinstance(X, (str, Path)):
            corpus = AudioCorpus.from_directory(X, config.sample_rate)
        else:
            corpus = AudioCorpus([check_waveform(x, f"X[{i}]", allow_empty=False)
                                  for i, x in enumerate(X)])
        trainer = Trainer(config, corpus)
        steps = self.max_steps if self.max_steps else config.total_steps
        self.history_ = trainer.run(steps)
        self.trainer_ = trainer
        self.config_ = config
        return self

    def _require_fitted(self) -> Trainer:
        trainer = getattr(self, "trainer_", None)
        if trainer is None:
            raise ContractError(
                "this MDCTCodec instance is not fitted yet; call fit() or load()")
        return trainer

    # -- coding ---------------------------------------------------------------------

    def encode(self, x) -> np.ndarray:
        """Waveform -> token frames [n_frames, Q]; input is zero-padded so the
        spectrum row count divides the downsample rate."""
        trainer = self._require_fitted()
        config = self.config_
        x = check_waveform(x)
        hop = config.token_hop
        padded = np.pad(x, (0, -(-len(x) // hop) * hop - len(x))) if len(x) else x
        if padded.size == 0:
            return np.empty((0, config.num_quantizers), dtype=np.int64)
        spectrum = mdct(padded, config.mdct_config()).astype(config.np_dtype())
        with no_grad():
            code = trainer.generator.encoder(Tensor(spectrum[None]))
            result = trainer.quantizer.quantize(code)
        return result.tokens[0]

    def decode(self, tokens, num_samples: Optional[int] = None) -> np.ndarray:
        """Token frames -> waveform; truncated to `num_samples` when given."""
        trainer = self._require_fitted()
        config = self.config_
        tokens = check_tokens(tokens, config.num_quantizers, config.codebook_size)
        if tokens.shape[0] == 0:
            return np.zeros(num_samples or 0)
        code = trainer.quantizer.dequantize(tokens)
        with no_grad():
            spectrum = trainer.generator.decoder(
                Tensor(code[None].astype(config.np_dtype())))
        wave = imdct(spectrum.data[0], config.mdct_config()).astype(np.float64)
        return wave[:num_samples] if num_samples is not None else wave

    def reconstruct(self, x) -> np.ndarray:
        """decode(encode(x)) with the original length preserved."""
        x = check_waveform(x)
        return self.decode(self.encode(x), num_samples=len(x))

    def transform(self, X) -> list[np.ndarray]:
        return [self.encode(x) for x in X]

    def inverse_transform(self, token_lists,
                          lengths: Optional[Sequence[int]] = None) -> list[np.ndarray]:
        lengths = lengths if lengths is not None else [None] * len(token_lists)
        return [self.decode(t, n) for t, n in zip(token_lists, lengths)]

    # -- bitstreams -------------------------------------------------------------------

    def stream_header(self, num_token_frames: int,
                      original_sample_count: int) -> bitstream.StreamHeader:
        trainer = self._require_fitted()
        config = self.config_
        return bitstream.StreamHeader(
            sample_rate=config.sample_rate, frame_shift=config.frame_shift,
            downsample_rate=config.downsample_rate,
            num_quantizers=config.num_quantizers,
            bits_per_index=config.rvq_config().bits_per_index,
            num_token_frames=num_token_frames,
            original_sample_count=original_sample_count,
            codebook_fingerprint=trainer.quantizer.fingerprint())

    def encode_to_bytes(self, x) -> bytes:
        x = check_waveform(x)
        tokens = self.encode(x)
        return bitstream.pack(tokens, self.stream_header(tokens.shape[0], len(x)))

    def decode_from_bytes(self, data: bytes, force: bool = False) -> np.ndarray:
        trainer = self._require_fitted()
        header, tokens = bitstream.unpack(data)
        if not force and header.codebook_fingerprint != trainer.quantizer.fingerprint():
            raise FingerprintMismatchError(
                "stream codebook fingerprint does not match this model "
                "(pass force=True to decode anyway)")
        return self.decode(tokens, num_samples=header.original_sample_count)

    # -- persistence -----------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        self._require_fitted().save_checkpoint(path)

    @classmethod
    def load(cls, path: str | Path, force: bool = False) -> "MDCTCodec":
        trainer = Trainer.load_checkpoint(path, force=force)
        codec = cls._from_config(trainer.config)
        codec.trainer_ = trainer
        codec.config_ = trainer.config
        codec.history_ = []
        return codec
