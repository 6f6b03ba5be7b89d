"""Exception types shared across the toolkit."""

from __future__ import annotations


class KgAlignError(Exception):
    """Base class for all toolkit errors."""


class MalformedRecord(KgAlignError):
    """A dump line could not be parsed into a record.

    Ingestion never raises this; malformed lines are counted in the
    clean report and skipped.
    """


class DimensionMismatch(KgAlignError, ValueError):
    """Vector dimensions disagree."""


class DuplicateId(KgAlignError, ValueError):
    """An id occurs more than once where uniqueness is required."""


class NonUnitVector(KgAlignError, ValueError):
    """A vector expected to be L2-normalized is not."""


class RangeError(KgAlignError, ValueError):
    """A numeric argument is outside its documented range."""


class LengthMismatch(KgAlignError, ValueError):
    """Two parallel sequences have different lengths."""


class EmptyPositives(KgAlignError, ValueError):
    """A contrastive batch contains no positive rows."""


class DegenerateInput(KgAlignError, ValueError):
    """An input produced a zero feature vector that cannot be normalized."""


class DivergenceDetected(KgAlignError, RuntimeError):
    """Training loss became non-finite."""


class SingleClassInput(KgAlignError, ValueError):
    """A score set contains only one label class."""


class MissingGold(KgAlignError, KeyError):
    """A ranked query has no gold entry."""


class ProviderError(KgAlignError, RuntimeError):
    """An embedding provider failed after exhausting its retry policy."""


class TransportError(KgAlignError, RuntimeError):
    """A chat-completion request failed after exhausting its retry policy."""


class MalformedOutput(KgAlignError, ValueError):
    """A chat-completion response violates the ranking output grammar."""


class ConfigError(KgAlignError, ValueError):
    """A run configuration is invalid or references missing inputs."""
