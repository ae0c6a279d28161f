"""Exception hierarchy shared across the package."""


class GapError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(GapError, ValueError):
    pass


class ZeroDiagonal(GapError, ValueError):
    pass


class NotLowerTriangular(GapError, ValueError):
    pass


class NotSquare(GapError, ValueError):
    pass


class NotSPD(GapError, ValueError):
    pass


class RankDeficient(GapError, ValueError):
    pass


class GridMismatch(GapError, ValueError):
    pass


class AntipodalOrEqual(GapError, ValueError):
    """Two points on the sphere are (anti)podal, so no geodesic direction is canonical."""


class InvalidSpec(GapError, ValueError):
    pass


class BadCorrelation(GapError, ValueError):
    pass


class DegenerateWeights(GapError, FloatingPointError):
    """Every importance weight underflowed; the estimate carries no information."""


class StepProducedSingularL(GapError, FloatingPointError):
    pass


class DomainError(GapError, ValueError):
    pass


class NoConvergence(GapError, RuntimeError):
    """An iterative method gave up; ``partial`` may hold the work done so far."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class IndefiniteHessian(GapError, ValueError):
    pass
