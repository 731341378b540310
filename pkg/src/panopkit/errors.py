"""Exception hierarchy for panopkit.

Every error raised by the library derives from :class:`PanopkitError`, so
callers that only care about "something in the toolkit failed" can catch one
class. The concrete classes mirror the failure modes of each operation.
"""


class PanopkitError(Exception):
    pass


# core
class OverlapViolation(PanopkitError):
    pass


class UnknownCategory(PanopkitError):
    pass


class AreaMismatch(PanopkitError):
    pass


class DimensionMismatch(PanopkitError):
    pass


class CategoryTableMismatch(PanopkitError):
    pass


# imgproc
class NonPositiveSigma(PanopkitError, ValueError):
    pass


class DegenerateRegion(PanopkitError):
    pass


class TooFewPoints(PanopkitError):
    pass


class CollinearPoints(PanopkitError):
    pass


class DegeneratePolygon(PanopkitError):
    pass


# synthesis
class BoxOutOfBounds(PanopkitError):
    pass


# metrics / experiment
class MissingConfidence(PanopkitError):
    pass


class EmptyGrid(PanopkitError, ValueError):
    pass


class TooFewItems(PanopkitError):
    pass


class MixedThresholds(PanopkitError):
    pass


class TooFewFolds(PanopkitError):
    pass


# io
class DecodeError(PanopkitError):
    pass


class UnsupportedFormat(PanopkitError):
    pass


class IdOverflow(PanopkitError):
    pass


class SidecarMismatch(PanopkitError):
    pass


class MissingColumn(PanopkitError):
    pass


class MalformedRow(PanopkitError):
    """One or more rows of a table failed validation.

    ``problems`` holds ``(line_number, message)`` tuples for every bad row so
    a hand-maintained file can be fixed in one pass.
    """

    def __init__(self, path, problems):
        self.path = str(path)
        self.problems = list(problems)
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.problems)
        super().__init__(f"{self.path}: {len(self.problems)} malformed row(s): {lines}")


class EmptyInput(PanopkitError, ValueError):
    pass


class WriteError(PanopkitError):
    pass


class FallbackWarning(UserWarning):
    """Synthesis could not threshold/hull a box and fell back to the whole box."""


class OverlapDropWarning(UserWarning):
    """A segment lost all of its pixels to earlier segments and was dropped."""


class ConfidenceWarning(UserWarning):
    """A prediction had no confidence; 1.0 was assumed."""


class UndefinedValueWarning(UserWarning):
    """An undefined metric value was excluded from an aggregate."""
