"""Exception hierarchy shared by every subfit module.

The CLI reports failures by the class name, so names are part of the
public interface.
"""


class SubfitError(Exception):
    """Base class for all library errors."""

    @property
    def error_class(self):
        return type(self).__name__


class ParseError(SubfitError):
    pass


class IoError(SubfitError):
    pass


class NonManifold(SubfitError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MissingNormals(SubfitError):
    pass


class DegenerateInput(SubfitError):
    pass


class TargetUnreachable(SubfitError):
    """Decimation stopped early; ``mesh`` holds the best-effort result."""

    def __init__(self, message, mesh=None):
        super().__init__(message)
        self.mesh = mesh


class PatchConditionViolated(SubfitError):
    pass


class DomainError(SubfitError):
    pass


class LevelTooLarge(SubfitError):
    pass


class DimensionMismatch(SubfitError):
    pass


class EmptyNeighborhood(SubfitError):
    """No cloud point lies within the support radius of the query."""


class AllSamplesEmpty(SubfitError):
    def __init__(self, message, max_nearest_distance=None):
        super().__init__(message)
        self.max_nearest_distance = max_nearest_distance


class DegenerateTriangle(SubfitError):
    pass


class Diverged(SubfitError):
    pass


class ConfigError(SubfitError):
    pass


class FrameError(SubfitError):
    """A frame of a sequence fit failed; ``frame`` is its index."""

    def __init__(self, frame, cause):
        super().__init__(f"frame {frame}: {cause.error_class}: {cause}")
        self.frame = frame
        self.cause = cause

    @property
    def error_class(self):
        return self.cause.error_class
