"""Exception types raised by the substadj library.

All exceptions derive from :class:`SubstadjError` so callers can catch the
library's failures with a single except clause. Degenerate *data* (empty
classes, zero within-class variance on one coordinate) is generally reported
through flags on result objects instead of exceptions; exceptions signal
misuse or inputs on which the requested computation is undefined.
"""


class SubstadjError(Exception):
    """Base class for all substadj errors."""


class InvalidArgument(SubstadjError, ValueError):
    """An argument violates a documented precondition."""


class DimensionMismatch(SubstadjError, ValueError):
    """Array shapes are inconsistent with each other."""


class LengthMismatch(DimensionMismatch):
    """Two vectors that must be paired have different lengths."""


class MissingLabels(SubstadjError, ValueError):
    """An operation requires labels that the dataset does not carry."""


class ZeroConditionalVariance(SubstadjError, ValueError):
    """The mixture-averaged conditional variance of a coordinate is zero."""


class RankDeficient(SubstadjError, ValueError):
    """A matrix does not have the rank required by the operation."""


class NonPositiveEigenvalue(SubstadjError, ValueError):
    """Tensor power iteration found no strictly positive eigenvalue."""


class ZeroResidualVariance(SubstadjError, ValueError):
    """A coordinate has no residual variation within classes."""


class ZeroNorm(SubstadjError, ValueError):
    """A vector that must be nonzero has norm zero."""


class DegenerateInputs(SubstadjError, ValueError):
    """Bound computation is undefined (empty class or zero residual ratio)."""


class SingularSystem(SubstadjError, ValueError):
    """A linear system to be solved is singular."""


class CoincidentMeans(SubstadjError, ValueError):
    """Two class mean vectors coincide, so a relative error is undefined."""


class NonGaussianFamily(SubstadjError, ValueError):
    """A Gaussian-only computation was requested for another family."""
