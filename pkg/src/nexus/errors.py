"""Exception hierarchy shared across modules."""

from __future__ import annotations


class NexusError(Exception):
    """Base class for all library errors."""


class ShapeError(NexusError, ValueError):
    pass


class DomainError(NexusError, ValueError):
    pass


class NumericError(NexusError, FloatingPointError):
    """A public operation produced a non-finite value."""


class DegenerateError(NexusError, ValueError):
    """Normalizer vanished: zero feature row, zero kernel mass, or empty mask."""


class ConfigError(NexusError, ValueError):
    pass


class DataError(NexusError, ValueError):
    """Ingestion, split or windowing failure."""


class StabilityError(DataError):
    pass


class TransferError(NexusError, ValueError):
    pass


class DivergenceError(NexusError, RuntimeError):
    """Training hit a non-finite loss.

    ``checkpoint`` holds the last finite parameter snapshot and ``history``
    the epochs completed before the failure.
    """

    def __init__(self, message, checkpoint=None, history=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history
