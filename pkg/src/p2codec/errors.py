"""Exception hierarchy shared by every codec layer."""


class CodecError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(CodecError):
    """Malformed caller input: bad image geometry, bad patch, bad file."""


class ConfigError(CodecError):
    """Unusable configuration (precision out of range, bad provider spec)."""


class ContextOverflowError(ConfigError):
    """Patch token count plus prompt does not fit the provider's window."""


class CorruptStreamError(CodecError):
    """A bitstream or token stream cannot be decoded consistently."""


class CorruptContainerError(CodecError):
    """A container file violates its own structural invariants."""


class WrongProviderError(CodecError):
    """Provider or token-map fingerprint does not match the container."""


class TokenizerUnsuitableError(CodecError):
    """Provider vocabulary cannot represent every symbol as one token."""


class ProviderUnavailableError(CodecError):
    """Provider handshake or transport failed."""


class CorruptProviderOutputError(CodecError):
    """Provider returned non-finite or otherwise unusable predictions."""


class UnsupportedCheckError(CodecError):
    """A verification routine was asked to run against an unsuitable provider."""


class BenchHarnessError(CodecError):
    """A benchmark cell failed verification; carries the offending config."""
