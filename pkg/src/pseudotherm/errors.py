"""Exception types raised across the package."""


class InvalidSubsetError(ValueError):
    """A subset is not canonical, has the wrong cardinality, or leaves the ground set."""


class CapacityError(RuntimeError):
    """A dense index or matrix would exceed the configured budget.

    ``dimension`` carries the offending size so callers can report it.
    """

    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension


class IterativeFailure(RuntimeError):
    """The iterative eigensolver did not reach the requested residual."""

    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class FitError(ValueError):
    """A late-time fit window holds too few or non-positive samples."""
