"""Exception hierarchy for roughpde."""


class RoughPDEError(Exception):
    """Base class for all library errors."""


class ShapeMismatchError(RoughPDEError, ValueError):
    """Operands disagree on dimension, step or grid."""


class NotLieError(RoughPDEError, ValueError):
    """A tensor passed to ``exp`` is not in the free nilpotent Lie algebra."""


class GridError(RoughPDEError, ValueError):
    """Time grids are malformed or incompatible."""


class DriverError(RoughPDEError):
    """A stochastic driver could not be sampled."""


class BlowUpError(RoughPDEError, FloatingPointError):
    """RDE state left the admissible region."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SmoothnessError(RoughPDEError, ValueError):
    """Vector fields do not provide enough derivatives for the requested scheme."""


class DerivativeCheckError(RoughPDEError, ValueError):
    """Analytic derivatives disagree with finite differences."""


class RegularityError(RoughPDEError, ValueError):
    """Coefficients violate their declared Hölder bound."""


class SingularFlowError(RoughPDEError, ArithmeticError):
    """Flow Jacobian is (numerically) singular."""


class EllipticityError(RoughPDEError, ValueError):
    """Diffusion coefficients fail the uniform ellipticity check."""


class CFLError(RoughPDEError):
    """Explicit transport term violates the Courant bound."""


class LinearSolveError(RoughPDEError):
    """A sparse linear solve failed."""


class ConfigError(RoughPDEError, ValueError):
    """Experiment configuration is invalid."""
