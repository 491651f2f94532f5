"""Exception types shared across the package."""


class SphereRigidityError(Exception):
    """Base class for all package-specific failures."""


class ResolutionError(SphereRigidityError):
    """Requested spectral degree exceeds what the grid can resolve."""


class DegenerateMapError(SphereRigidityError):
    """A vector field passes too close to zero to project onto the sphere."""


class PoleError(SphereRigidityError):
    """Stereographic projection evaluated at (or too close to) its pole."""


class RepresentationError(SphereRigidityError):
    """A map could not be represented in rotation-dilation form within tolerance."""


class OutOfRegimeError(SphereRigidityError):
    """Linear coefficient outside the regime where the certified bounds apply."""


class GenerationError(SphereRigidityError):
    """A test-map generator produced a map failing its admissibility check."""


class CenteringError(SphereRigidityError):
    """Mean-centering solver failed to converge.

    Carries the best residual vector seen, which callers can inspect to
    distinguish under-resolution from genuine near-bubbling.
    """

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual
