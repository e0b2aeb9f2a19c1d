"""Exception types raised across the package."""


class IMLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(IMLError, ValueError):
    """Invalid parameters: degenerate bounds, bad delta, unknown experiment id."""


class ValidationError(IMLError, ValueError):
    """Input data violates a structural requirement (symmetry, gap flavor, Lipschitz bound)."""


class ResolutionError(IMLError, ValueError):
    """The grid is too coarse for the requested construction or estimate."""


class EllipticityError(ValidationError):
    """A diffusion matrix is singular or not positive definite."""


class UnreachableError(IMLError):
    """A node has no finite-length path to the source."""


class ConvergenceError(IMLError, RuntimeError):
    """An iterative solver hit its iteration cap.

    ``history`` holds sampled sup-norm updates, ending with the last sweep.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = [] if history is None else list(history)
