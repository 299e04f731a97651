"""Exception hierarchy shared by all modules."""


class PointScatterError(Exception):
    """Base class for all package errors."""


class ResourceError(PointScatterError):
    """A request would exceed a configured memory or mode budget."""

    def __init__(self, msg, budget=None):
        super().__init__(msg)
        self.budget = budget


class DomainError(PointScatterError, ValueError):
    """A point lies outside the fundamental domain."""


class PoleError(PointScatterError, ValueError):
    """A spectral parameter coincides with a Laplacian eigenvalue."""


class CoincidenceError(PointScatterError, ValueError):
    """Two points are closer than the allowed separation."""


class ConvergenceError(PointScatterError):
    """A truncated sum or quadrature did not reach its tolerance.

    ``tail`` holds the tail estimate at the point of failure.
    """

    def __init__(self, msg, tail=None):
        super().__init__(msg)
        self.tail = tail


class NumericError(PointScatterError):
    """An eigensolver failed or a monotonicity assumption was violated."""


class DefinednessError(PointScatterError, ValueError):
    """A quantity is undefined for the given arguments (empty sum, zero divisor)."""


class ConfigError(PointScatterError, ValueError):
    """Invalid experiment or process configuration."""
