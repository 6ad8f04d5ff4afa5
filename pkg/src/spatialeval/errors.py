"""Exception hierarchy shared across the harness.

CLI exit-code mapping: ValidationError/IntegrityError -> 2,
BackendFailure/ProtocolError -> 3.
"""

from __future__ import annotations


class SpatialEvalError(Exception):
    """Base class for all harness errors."""


class ValidationError(SpatialEvalError):
    """Bad input data: rejected pairs, malformed files, inconsistent counts."""


class IntegrityError(ValidationError):
    """Cross-record consistency broken: dangling links, seed-count mismatch,
    mixed config digests."""


class BackendFailure(SpatialEvalError):
    """A detector backend timed out, crashed, or returned an error response."""

    def __init__(self, message: str, detector_id: str | None = None):
        super().__init__(message)
        self.detector_id = detector_id


class ProtocolError(BackendFailure):
    """A wire-protocol line could not be parsed or violated the contract."""

    def __init__(self, message: str, detector_id: str | None = None,
                 line_number: int | None = None):
        if line_number is not None:
            message = f"{message} (line {line_number})"
        super().__init__(message, detector_id=detector_id)
        self.line_number = line_number
