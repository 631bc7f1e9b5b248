"""Exception hierarchy.

Every error raised on purpose by the toolkit derives from ``SpinstatError``;
most also derive from ``ValueError`` so callers that only care about bad
input can catch the builtin.
"""


class SpinstatError(Exception):
    """Base class for all toolkit errors."""


class NotHermitian(SpinstatError, ValueError):
    pass


class NotUnitary(SpinstatError, ValueError):
    pass


class DomainError(SpinstatError, ValueError):
    """A spectral function is undefined somewhere on the spectrum."""


class SingularInput(SpinstatError, ValueError):
    pass


class DimensionMismatch(SpinstatError, ValueError):
    pass


class RegionNotContained(SpinstatError, ValueError):
    pass


class OverlappingRegions(SpinstatError, ValueError):
    pass


class InvalidSize(SpinstatError, ValueError):
    pass


class InvalidPartition(SpinstatError, ValueError):
    pass


class OutsideConvergenceRadius(SpinstatError, ValueError):
    pass


class ToleranceUnreachable(SpinstatError, RuntimeError):
    pass


class OrderTooHigh(SpinstatError, ValueError):
    pass


class NonFaithfulReference(SpinstatError, ValueError):
    pass


class NonFaithfulState(SpinstatError, ValueError):
    pass


class NonSeparatingVector(SpinstatError, ValueError):
    pass


class OutsideStrip(SpinstatError, ValueError):
    pass


class BadReservoirIndex(SpinstatError, IndexError):
    pass


class InvalidState(SpinstatError, ValueError):
    """Matrix is not a density matrix (not positive or not unit trace)."""
