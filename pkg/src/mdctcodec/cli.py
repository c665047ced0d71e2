"""Command-line interface: train, encode, decode, eval, dump-spectrum.

Every failure exits nonzero with a one-line machine-parsable reason on
stderr, formatted ``error: [REASON] message``.  Exit codes:

    0   success
    1   generic failure (e.g. every file in an eval run failed)
    2   usage error (argparse)
    3   missing or unreadable input file
    4   sample-rate mismatch
    5   unsupported audio layout (channels / sample format)
    6   missing checkpoint
    7   corrupt or truncated bitstream
    8   configuration/codebook fingerprint mismatch
    9   checkpoint integrity failure
    10  invalid configuration or overrides

The environment variable ``MDCTCODEC_CHECKPOINT_DIR`` provides a default
directory for resolving relative checkpoint paths.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bitstream
from .audio_io import read_wav, write_wav
from .codec import MDCTCodec
from .config import CodecConfig
from .errors import (CodecError, CorruptStreamError, FingerprintMismatchError,
                     IntegrityError, InvalidConfigError, SampleRateError,
                     TruncatedStreamError, UnsupportedAudioError)
from .metrics import lsd
from .trainer import AudioCorpus, Trainer
from .transform import MdctConfig, mdct

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_INPUT = 3
EXIT_RATE_MISMATCH = 4
EXIT_UNSUPPORTED_AUDIO = 5
EXIT_MISSING_CHECKPOINT = 6
EXIT_CORRUPT_STREAM = 7
EXIT_FINGERPRINT = 8
EXIT_INTEGRITY = 9
EXIT_BAD_CONFIG = 10


class CliFailure(Exception):
    def __init__(self, code: int, reason: str, message: str):
        super().__init__(message)
        self.code = code
        self.reason = reason


def _fail(code: int, reason: str, message: str) -> CliFailure:
    return CliFailure(code, reason, message)


def _classify(exc: Exception) -> CliFailure:
    if isinstance(exc, CliFailure):
        return exc
    if isinstance(exc, SampleRateError):
        return _fail(EXIT_RATE_MISMATCH, "E_RATE_MISMATCH", str(exc))
    if isinstance(exc, UnsupportedAudioError):
        return _fail(EXIT_UNSUPPORTED_AUDIO, "E_UNSUPPORTED_AUDIO", str(exc))
    if isinstance(exc, FingerprintMismatchError):
        return _fail(EXIT_FINGERPRINT, "E_FINGERPRINT_MISMATCH", str(exc))
    if isinstance(exc, (TruncatedStreamError, CorruptStreamError)):
        return _fail(EXIT_CORRUPT_STREAM, "E_CORRUPT_STREAM", str(exc))
    if isinstance(exc, IntegrityError):
        return _fail(EXIT_INTEGRITY, "E_CHECKPOINT_INTEGRITY", str(exc))
    if isinstance(exc, InvalidConfigError):
        return _fail(EXIT_BAD_CONFIG, "E_INVALID_CONFIG", str(exc))
    if isinstance(exc, FileNotFoundError):
        return _fail(EXIT_BAD_INPUT, "E_MISSING_INPUT", str(exc))
    if isinstance(exc, CodecError):
        return _fail(EXIT_FAILURE, "E_CODEC", str(exc))
    raise exc


def _resolve_checkpoint(path: str) -> Path:
    candidate = Path(path)
    if candidate.exists():
        return candidate
    default_dir = os.environ.get("MDCTCODEC_CHECKPOINT_DIR")
    if default_dir and not candidate.is_absolute():
        fallback = Path(default_dir) / candidate
        if fallback.exists():
            return fallback
    raise _fail(EXIT_MISSING_CHECKPOINT, "E_MISSING_CHECKPOINT",
                f"checkpoint not found: {path}")


def _load_codec(path: str, force: bool = False) -> MDCTCodec:
    return MDCTCodec.load(_resolve_checkpoint(path), force=force)


def _read_input_wav(path: str) -> tuple[np.ndarray, int]:
    if not Path(path).exists():
        raise _fail(EXIT_BAD_INPUT, "E_MISSING_INPUT", f"input not found: {path}")
    return read_wav(path)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    config = CodecConfig.from_file(args.config) if args.config else CodecConfig()
    if args.set:
        config = config.with_overrides(args.set)
    if args.seed is not None:
        config = config.with_overrides({"seed": str(args.seed)})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = AudioCorpus.from_directory(args.data, config.sample_rate)
    if args.resume:
        trainer = Trainer.load_checkpoint(_resolve_checkpoint(args.resume),
                                          config=config, corpus=corpus,
                                          force=args.force)
    else:
        trainer = Trainer(config, corpus)
    steps = args.steps if args.steps is not None else config.total_steps
    remaining = max(0, steps - trainer.step_count)
    print(f"training for {remaining} steps "
          f"(effective segment {config.effective_segment} samples, "
          f"requested {config.segment_samples})")
    trainer.run(remaining, metrics_path=out_dir / "metrics.log",
                checkpoint_dir=out_dir)
    final = out_dir / "final.ckpt"
    trainer.save_checkpoint(final)
    print(f"final checkpoint: {final}")
    return EXIT_OK


def cmd_encode(args) -> int:
    samples, rate = _read_input_wav(args.input)
    codec = _load_codec(args.checkpoint)
    if rate != codec.config_.sample_rate:
        raise SampleRateError(
            f"input rate {rate} != model rate {codec.config_.sample_rate}")
    data = codec.encode_to_bytes(samples)
    Path(args.out).write_bytes(data)
    header, _ = bitstream.unpack(data)
    duration = len(samples) / rate
    bps = header.payload_bits / duration if duration > 0 else 0.0
    print(f"wrote {args.out}: {header.num_token_frames} token frames, "
          f"{len(data)} bytes, {bps:.1f} bits/s payload")
    return EXIT_OK


def cmd_decode(args) -> int:
    stream_path = Path(args.input)
    if not stream_path.exists():
        raise _fail(EXIT_BAD_INPUT, "E_MISSING_INPUT", f"input not found: {args.input}")
    codec = _load_codec(args.checkpoint)
    wave = codec.decode_from_bytes(stream_path.read_bytes(), force=args.force)
    clipped = int(np.sum((wave < -1.0) | (wave > 1.0)))
    if clipped:
        print(f"warning: clamped {clipped} samples outside [-1, 1]", file=sys.stderr)
    write_wav(args.out, np.clip(wave, -1.0, 1.0), codec.config_.sample_rate)
    print(f"wrote {args.out}: {len(wave)} samples "
          f"at {codec.config_.sample_rate} Hz")
    return EXIT_OK


def _eval_one(codec: MDCTCodec, path: Path) -> dict:
    samples, rate = read_wav(path)
    if rate != codec.config_.sample_rate:
        raise SampleRateError(
            f"{path.name}: rate {rate} != model rate {codec.config_.sample_rate}")
    duration = len(samples) / rate
    start = time.perf_counter()
    tokens = codec.encode(samples)
    encode_time = time.perf_counter() - start
    start = time.perf_counter()
    decoded = codec.decode(tokens, num_samples=len(samples))
    decode_time = time.perf_counter() - start
    bits = tokens.size * codec.config_.rvq_config().bits_per_index
    return {
        "file": path.name,
        "lsd": lsd(samples, decoded),
        "bps": bits / duration if duration > 0 else 0.0,
        "rtf": decode_time / duration if duration > 0 else 0.0,
        "encode_time": encode_time,
        "decode_time": decode_time,
        "duration": duration,
    }


def cmd_eval(args) -> int:
    codec = _load_codec(args.checkpoint)
    paths = sorted(Path(args.data).glob("*.wav"))
    if not paths:
        raise _fail(EXIT_BAD_INPUT, "E_MISSING_INPUT",
                    f"no WAV files under {args.data}")
    results, failures = [], 0
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        futures = [pool.submit(_eval_one, codec, p) for p in paths]
        for path, future in zip(paths, futures):
            try:
                results.append(future.result())
            except Exception as exc:
                failures += 1
                print(f"error: [E_EVAL_FILE] {path.name}: {exc}", file=sys.stderr)
    for row in results:
        print(f"{row['file']}: lsd={row['lsd']:.4f} dB bps={row['bps']:.1f} "
              f"rtf={row['rtf']:.4f}")
    if results:
        mean_lsd = float(np.mean([r["lsd"] for r in results]))
        mean_bps = float(np.mean([r["bps"] for r in results]))
        total_rtf = (sum(r["decode_time"] for r in results)
                     / max(sum(r["duration"] for r in results), 1e-12))
        print(f"mean: lsd={mean_lsd:.4f} dB bps={mean_bps:.1f} "
              f"rtf={total_rtf:.4f} files={len(results)}")
    return EXIT_OK if results else EXIT_FAILURE


def cmd_dump_spectrum(args) -> int:
    samples, _rate = _read_input_wav(args.input)
    if args.checkpoint:
        bins = _load_codec(args.checkpoint).config_.frame_shift
    else:
        bins = args.bins
    spectrum = mdct(samples, MdctConfig.from_bins(bins))
    np.savetxt(args.out, spectrum, delimiter=",", fmt="%.10g")
    print(f"wrote {args.out}: {spectrum.shape[0]} x {spectrum.shape[1]} grid")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdctcodec",
        description="MDCT-domain neural audio codec tools")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a codec on a WAV directory")
    train.add_argument("--config", help="flat key=value config file")
    train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
    train.add_argument("--data", required=True, help="directory of 48 kHz WAVs")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--steps", type=int, default=None,
                       help="train this many steps (default: config total_steps)")
    train.add_argument("--resume", help="checkpoint to resume from")
    train.add_argument("--force", action="store_true",
                       help="resume even if the config fingerprint differs")
    train.set_defaults(func=cmd_train)

    encode = sub.add_parser("encode", help="encode a WAV into a bitstream")
    encode.add_argument("input")
    encode.add_argument("--checkpoint", required=True)
    encode.add_argument("--out", required=True)
    encode.set_defaults(func=cmd_encode)

    decode = sub.add_parser("decode", help="decode a bitstream into a WAV")
    decode.add_argument("input")
    decode.add_argument("--checkpoint", required=True)
    decode.add_argument("--out", required=True)
    decode.add_argument("--force", action="store_true",
                        help="decode despite a codebook fingerprint mismatch")
    decode.set_defaults(func=cmd_decode)

    evaluate = sub.add_parser("eval", help="round-trip a directory and report LSD")
    evaluate.add_argument("data")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--jobs", type=int, default=1)
    evaluate.set_defaults(func=cmd_eval)

    dump = sub.add_parser("dump-spectrum", help="write an MDCT spectrum as CSV")
    dump.add_argument("input")
    dump.add_argument("--out", required=True)
    dump.add_argument("--bins", type=int, default=40)
    dump.add_argument("--checkpoint", default=None,
                      help="take the bin count from this checkpoint")
    dump.set_defaults(func=cmd_dump_spectrum)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # classified below; programming errors re-raise
        failure = _classify(exc)
        print(f"error: [{failure.reason}] {failure}", file=sys.stderr)
        return failure.code


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
