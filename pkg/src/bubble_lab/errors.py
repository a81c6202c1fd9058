"""Exception hierarchy shared across the package."""


class BubbleLabError(Exception):
    """Base class for all package-specific failures."""


class CurvatureNotPositive(BubbleLabError):
    """Curvature data failed the positivity validation grid."""


class ConstantReducedFunctional(BubbleLabError):
    """The reduced boundary functional is constant to tolerance; no extrema exist."""


class QuadratureNotConverged(BubbleLabError):
    """Two quadrature refinement levels disagree beyond the requested tolerance."""


class TailNotConvergent(BubbleLabError):
    """Analytic tail estimate of an improper integral failed to drop below tolerance."""


class FluxNotCompatible(BubbleLabError):
    """Neumann data has a non-zero mean; the harmonic correction problem is unsolvable."""


class GridValidationFailed(BubbleLabError):
    """A solver grid failed one of its construction self-tests."""


class NewtonDiverged(BubbleLabError):
    """Newton residual grew for a full iteration at the minimal damped step."""


class JacobianSingular(BubbleLabError):
    """The (bordered) linearized system could not be solved."""


class MaxIterExceeded(BubbleLabError):
    """Iteration budget exhausted before reaching tolerance."""


class ContractionFailed(BubbleLabError):
    """Fixed-point iteration stopped contracting (Lipschitz estimate > 0.9 twice)."""


class ConfigError(BubbleLabError):
    """Experiment configuration failed validation.

    `field` names the offending entry so reports can carry a machine-readable
    error record.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
