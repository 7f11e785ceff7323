"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: ValidationError -> 2,
StorageError (and OSError) -> 3, DataError -> 4.
"""

from __future__ import annotations


class CascadeSearchError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CascadeSearchError):
    """A contract or invariant was violated (bad config, bad arguments)."""


class ConfigError(ValidationError):
    """The engine config file is missing, unparseable, or inconsistent."""


class InfeasibleTargetError(ValidationError):
    """A requested target (speedup, lifetime return fraction) cannot be met."""


class StorageError(CascadeSearchError):
    """An on-disk artifact could not be read or written."""


class FormatError(StorageError):
    """A stored file does not conform to its binary format."""


class CorruptLogError(FormatError):
    """A cache log contains conflicting entries for the same document."""


class DataError(CascadeSearchError):
    """A referenced document or query key does not exist."""


class UnknownDocError(DataError):
    """A document id is not present in the relevant source."""


class UnknownQueryError(DataError):
    """A query key cannot be resolved by the tier's text encoder."""
