"""MDCT-domain neural audio codec.

Waveforms are analyzed into MDCT spectra, encoded to a low-rate latent by a
ConvNeXt-v2-style encoder, discretized by a residual vector quantizer, and
decoded back through a mirror-symmetric decoder and inverse MDCT.  Training
is adversarial against a multi-resolution MDCT discriminator.
"""

from .codec import MDCTCodec
from .config import CodecConfig
from .metrics import lsd
from .quantizer import bitrate_bps
from .transform import MdctConfig, MelConfig, imdct, make_window, mdct

__version__ = "0.1.0"

__all__ = [
    "MDCTCodec",
    "CodecConfig",
    "MdctConfig",
    "MelConfig",
    "bitrate_bps",
    "imdct",
    "lsd",
    "make_window",
    "mdct",
    "__version__",
]
