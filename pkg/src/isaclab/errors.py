"""Exception types shared across the isaclab package."""


class IsaclabError(Exception):
    """Base class for all isaclab errors."""


class NumericalFailure(IsaclabError):
    """An iterative numerical routine failed to converge."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class NotPositiveDefinite(IsaclabError):
    """A matrix required to be positive definite is not."""


class NotPSD(IsaclabError):
    """A matrix required to be positive semidefinite is not."""


class DimensionError(IsaclabError):
    """Operands have inconsistent or unsupported dimensions."""


class EmptyScene(IsaclabError):
    """A target scene contains no scatterers."""


class ResidualNotPSD(IsaclabError):
    """A covariance residual that must be PSD has a significant negative eigenvalue."""


class ZeroBeamGain(IsaclabError):
    """A served user's beam gain h^H Q h is negative beyond tolerance."""
