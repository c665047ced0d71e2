"""Exception types shared across the package.

Every error raised on purpose derives from :class:`CodecError`, so callers
(CLI included) can distinguish codec failures from programming errors.
"""


class CodecError(Exception):
    """Base class for all codec errors."""


class InvalidConfigError(CodecError, ValueError):
    """A configuration value violates its documented constraints."""


class ShapeError(CodecError, ValueError):
    """Tensor or array shapes are incompatible with the requested operation."""


class ContractError(CodecError, ValueError):
    """A caller violated an operation precondition."""


class CorruptStreamError(CodecError):
    """A bitstream failed structural validation (magic, version, ranges)."""


class TruncatedStreamError(CorruptStreamError):
    """A bitstream ended before its declared payload was complete."""


class FingerprintMismatchError(CodecError):
    """Stream or checkpoint was produced under a different configuration."""


class IntegrityError(CodecError):
    """A checkpoint failed its checksum."""


class SampleRateError(CodecError):
    """Audio sample rate does not match the codec configuration."""


class UnsupportedAudioError(CodecError):
    """Audio file layout (channels, encoding) is outside the supported set."""


class NonFiniteLossError(CodecError):
    """A training loss became NaN or infinite; carries the component name."""

    def __init__(self, component: str, value: float):
        super().__init__(f"non-finite loss component {component!r}: {value!r}")
        self.component = component
        self.value = value
