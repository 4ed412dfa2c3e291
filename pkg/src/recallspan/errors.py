"""Shared exception types."""


class RecallSpanError(Exception):
    """Base class for all engine errors."""


class ConfigError(RecallSpanError):
    """Invalid configuration or malformed construction arguments."""


class InvalidContinuationError(RecallSpanError):
    """A token was fed to the matcher that the mask did not allow.

    Under masked decoding this cannot happen; raising it signals a caller
    bug (e.g. sampling from unmasked logits).
    """


class DegenerateCompletionError(RecallSpanError):
    """A completion with zero generated tokens cannot be scored."""
