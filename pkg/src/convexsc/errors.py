"""Exception types raised across the package."""


class ConvexError(ValueError):
    """Base class for invalid inputs to convex-analysis routines."""


class EmptyDomainError(ConvexError):
    """A function is identically +inf, or a grid misses its domain."""


class DegeneracyError(ConvexError):
    """Vertex enumeration of a polyhedral subdivision failed."""


class UnsupportedDimensionError(ConvexError):
    """The requested exact path is not available in this dimension."""


class SlopeCoverageError(ConvexError):
    """A dual grid does not cover the slope range of the primal samples."""

    def __init__(self, axis, needed, available):
        self.axis = axis
        self.needed = needed
        self.available = available
        super().__init__(
            f"dual grid axis {axis} covers [{available[0]:.6g}, {available[1]:.6g}] "
            f"but primal slopes span [{needed[0]:.6g}, {needed[1]:.6g}]"
        )


class ConvexityViolationError(ConvexError):
    """A Hessian determinant is negative beyond the clamping tolerance."""


class ZetaClassError(ConvexError):
    """An integrand fails membership in its declared class."""


class IncompatibleFunctionalError(ConvexError):
    """A family and functional descriptor cannot be combined."""
