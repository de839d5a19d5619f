"""Exception types raised across the package."""


class StiefelKFError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(StiefelKFError, ValueError):
    """Input has incompatible or invalid matrix dimensions."""


class DomainError(StiefelKFError, ValueError):
    """Scalar argument outside its mathematical domain (e.g. negative variance)."""


class SingularProjectionError(StiefelKFError):
    """Polar projection undefined: the matrix is (numerically) rank deficient."""


class BaseMismatchError(StiefelKFError, ValueError):
    """Two tangent vectors do not share the same base point."""


class InjectivityRadiusError(StiefelKFError):
    """Logarithm requested beyond the guaranteed injectivity radius, or the
    iterative solver failed to converge."""


class MeanNotFoundError(StiefelKFError):
    """Fixed-point iteration for the intrinsic mean did not converge."""


class InsufficientSampleError(StiefelKFError, ValueError):
    """Too few sample points for the requested statistic."""


class UnreliableRegimeError(StiefelKFError):
    """Monte Carlo estimate rejected: the distribution is too diffuse for the
    projection/logarithm machinery (rejection budget exceeded)."""


class ExtrapolationError(StiefelKFError):
    """Table lookup outside the tabulated range; no silent clamping."""


class VarianceOverflowError(ExtrapolationError):
    """Predicted variance left the range covered by the variance-transfer table."""


class TrajectoryError(StiefelKFError):
    """Simulation aborted (projection failure); carries the failing step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ConfigError(StiefelKFError, ValueError):
    """Malformed or inconsistent experiment configuration."""
