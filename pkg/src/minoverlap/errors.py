"""Exception types shared across the package."""


class MinOverlapError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MinOverlapError, ValueError):
    """Malformed arguments: wrong shapes, non-finite entries, bad ranges."""


class NotPSDError(MinOverlapError, ValueError):
    """A matrix expected to be positive semidefinite is not."""


class InvalidProgramError(MinOverlapError, ValueError):
    """A conic program whose data are inconsistent with its cone layout."""


class IndeterminateValueError(MinOverlapError):
    """The solver stopped before certifying optimality or infeasibility.

    The last iterate is attached as ``solution``.
    """

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasibleContainmentError(MinOverlapError):
    """A body cannot be placed inside the container at all."""


class NumericalError(MinOverlapError):
    """An iterative numerical procedure failed to converge."""


class MeasurementError(MinOverlapError):
    """An overlap measurement did not reach optimality.

    The partial report is attached as ``report``.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class IterationError(MinOverlapError):
    """A packing iteration failed; ``diagnostics`` holds solver details."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateError(MinOverlapError):
    """An operation would produce a non-positive radius or similar."""
