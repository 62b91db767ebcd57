"""Exception types raised across the package."""


class MixforgeError(Exception):
    """Base class for all package errors."""


class SizeError(MixforgeError, ValueError):
    """Dimensions or counts are out of range or do not match."""


class ValidationError(MixforgeError, ValueError):
    """An input violates a physical or structural precondition."""


class BranchCutError(MixforgeError, ValueError):
    """The matrix logarithm would cross the negative real axis."""


class ConvergenceError(MixforgeError, RuntimeError):
    """An iterative routine ran out of iterations.

    The best iterate found so far is attached as ``best`` so callers can
    still inspect or use it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleError(MixforgeError, ValueError):
    """A constrained program has an empty feasible set."""


class SchemaError(MixforgeError, ValueError):
    """A serialized file has an unknown or malformed schema."""
