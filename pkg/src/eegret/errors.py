"""Typed exception hierarchy used across the package.

The distinction matters: callers (and the CLI) route format/integrity
problems differently from bad parameters or misconfigured runs.
"""


class EegretError(Exception):
    """Base class for all package errors."""


class FormatError(EegretError):
    """A container, header, or file does not parse as the expected format."""


class IntegrityError(EegretError):
    """A file parses but its declared shape/size disagrees with its payload."""


class DataError(EegretError):
    """Values are unusable: NaN/Inf payloads, zero-norm rows, constant rows."""


class ConfigurationError(EegretError):
    """A spec/config combination that cannot be run as requested."""


class ParameterError(EegretError):
    """An argument outside the documented domain of an operation."""


class ModeError(EegretError):
    """Train/eval mode misuse (e.g. batch statistics on a single sample)."""


class ShapeError(EegretError):
    """Array dimensions do not line up."""


class MissingIdError(EegretError, KeyError):
    """A requested image id is absent from the source bank."""
