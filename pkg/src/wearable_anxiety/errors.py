"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all data and pipeline errors raised by the package."""


class ParseError(PipelineError):
    """Malformed on-disk input. ``lineno`` is 1-based (``None`` if not line-bound)."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class MalformedHeader(ParseError):
    pass


class MalformedSample(ParseError):
    pass


class NonMonotonicOffset(ParseError):
    pass


class NonPositiveInterval(ParseError):
    pass


class MalformedEvent(ParseError):
    pass


class AnxietyOutOfRange(ParseError):
    pass


class OverlappingPhases(ParseError):
    pass


class MissingChannel(PipelineError):
    pass


class DisjointTimeRanges(PipelineError):
    pass


class GapTooLong(PipelineError):
    def __init__(self, message: str, start: float, end: float):
        self.start = start
        self.end = end
        super().__init__(f"{message} (t={start:.3f}..{end:.3f} s)")


class AllMissing(PipelineError):
    pass


class SignalTooShort(PipelineError):
    pass


class InvalidSpec(PipelineError):
    pass


class NoValidWindows(PipelineError):
    pass


class EmptyChannel(PipelineError):
    pass


class NoRatings(PipelineError):
    pass


class BaselineOverlapsBat(PipelineError):
    pass


class NonFiniteInput(PipelineError):
    pass


class InsufficientData(PipelineError):
    pass


class EmptyDataset(PipelineError):
    pass


class SequenceTooShort(PipelineError):
    pass


class DimensionMismatch(PipelineError):
    pass


class TooFewParticipants(PipelineError):
    pass


class EmptySelection(PipelineError):
    pass


class UnknownParticipant(PipelineError):
    pass


class StageError(PipelineError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception, context: str | None = None):
        self.stage = stage
        self.cause = cause
        self.context = context
        where = f"{context}: " if context else ""
        super().__init__(f"{where}stage '{stage}' failed: {type(cause).__name__}: {cause}")
