"""Typed errors raised by the engine.

All engine errors derive from :class:`CtlayerError` so callers (the CLI in
particular) can separate data problems from programming bugs. Every class
takes a plain message, which lets computation stages re-raise with added
context (e.g. the failing layer index) without losing the error type.
"""


class CtlayerError(Exception):
    """Base class for every error this package raises on bad data or usage."""


class FormatError(CtlayerError):
    """A byte stream or text file does not parse as the declared format."""


class ValidationError(CtlayerError):
    """An input violates a documented invariant or precondition."""


class ThresholdError(CtlayerError):
    """No cell passes the minimum sample-count threshold."""


class UsageError(CtlayerError):
    """Bad command-line invocation (unknown flag, out-of-range value, missing file)."""
