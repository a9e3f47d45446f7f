"""Exception types shared across the pipeline."""

from __future__ import annotations


class TraceOsrError(Exception):
    """Base class for all pipeline errors."""


class MalformedLine(TraceOsrError):
    """A trace line that cannot be parsed (field count, integer, command name)."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OutOfRange(TraceOsrError):
    """An index outside the configured DRAM geometry."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class InvalidProfile(TraceOsrError):
    """A synthetic workload profile that violates protocol legality."""


class EmptyClass(TraceOsrError):
    """A class with no (or too few) samples where at least one is required."""


class TooFewSamples(TraceOsrError):
    """Not enough samples to fit (e.g. variance needs two points)."""


class ShapeMismatch(TraceOsrError):
    """Array shapes inconsistent with the model or detector."""


class NonFiniteLoss(TraceOsrError):
    """Training loss became NaN or infinite."""


class ZeroMatrix(TraceOsrError):
    """An all-zero matrix where a non-trivial decomposition is required."""


class EigenFailure(TraceOsrError):
    """The iterative eigensolver did not converge."""


class UncalibratedDetector(TraceOsrError):
    """decide() called on a detector without calibration statistics."""


class LabelOverlap(TraceOsrError):
    """Known and unknown label sets intersect."""


class VersionMismatch(TraceOsrError):
    """A persisted file has an unsupported format version."""


class CorruptBundle(TraceOsrError):
    """A persisted bundle failed structural or checksum validation."""


class LayoutMismatch(TraceOsrError):
    """Features and model were built from different vocab/geometry layouts."""
