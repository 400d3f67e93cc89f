"""Exception hierarchy shared by all modules."""


class OpBoundError(Exception):
    """Base class for library errors."""


class NotHermitian(OpBoundError):
    pass


class NoConvergence(OpBoundError):
    pass


class DimensionBlowup(OpBoundError):
    pass


class IllFormed(OpBoundError):
    pass


class NumericalBreakdown(OpBoundError):
    pass


class SizeExceeded(OpBoundError):
    pass


class ShapeMismatch(OpBoundError):
    pass


class DegenerateOverlap(OpBoundError):
    pass


class NotFullAlgebra(OpBoundError):
    pass


class ZeroMap(OpBoundError):
    pass


class PreconditionError(OpBoundError):
    """Raised when a documented precondition of an operation fails."""


class Degenerate(PreconditionError):
    pass


class ExtensionInfeasible(OpBoundError):
    pass


class GradingSplitFailure(OpBoundError):
    pass


class SamplerExhausted(OpBoundError):
    pass


class OutsideDisc(OpBoundError):
    pass


class NotIdempotent(OpBoundError):
    pass


class NotUCP(OpBoundError):
    pass


class OutsideRange(OpBoundError):
    pass
