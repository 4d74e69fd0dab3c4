"""Exception types raised by the isoband pipeline."""


class IsobandError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(IsobandError):
    """Inputs with inconsistent shapes or grids."""


class InvalidMetricError(IsobandError):
    """Metric data that is not symmetric positive definite or has a bad determinant."""


class DegenerateEllipticityError(IsobandError):
    """Beltrami coefficient too close to the unit circle for the solver."""


class IterationError(IsobandError):
    """Fixed-point iteration failed to reach tolerance."""

    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class DegenerateLatticeError(IsobandError):
    """Image lattice vector has (numerically) zero imaginary part."""


class OrientationError(IsobandError):
    """Non-positive Jacobian where a homeomorphism is required."""


class InversionError(IsobandError):
    """Newton inversion of the map did not converge."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class PushforwardError(IsobandError):
    """Pullback of a target sample failed."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class AliasingError(IsobandError):
    """Plane-wave cutoff too large for the coefficient grid."""


class AssemblyError(IsobandError):
    """Assembled fiber matrix violates a structural invariant."""


class EigensolverError(IsobandError):
    """Dense eigensolver failure, tagged with the quasimomentum index."""

    def __init__(self, message, k_index=None):
        super().__init__(message)
        self.k_index = k_index


class StageError(IsobandError):
    """Pipeline stage failure carrying the stage tag."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
