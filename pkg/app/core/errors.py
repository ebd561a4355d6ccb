from __future__ import annotations


class DecoderSimError(ValueError):
    """Base class for every error raised by the decoding engine and simulator."""


class DimensionMismatchError(DecoderSimError):
    pass


class AlistFormatError(DecoderSimError):
    pass


class CodeValidationError(DecoderSimError):
    pass


class ConfigError(DecoderSimError):
    pass
