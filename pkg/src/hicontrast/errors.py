"""Exception hierarchy.

Every error carries a short machine-readable ``code`` (the class name) which
the CLI surfaces in its diagnostics.
"""


class HiContrastError(Exception):
    """Base class for all package errors."""

    exit_code = 1

    @property
    def code(self) -> str:
        return type(self).__name__


class ValidationError(HiContrastError):
    """Input or configuration rejected before any numerics ran."""

    exit_code = 2


class InclusionTouchesBoundary(ValidationError):
    pass


class StiffDisconnected(ValidationError):
    pass


class EllipticityViolated(ValidationError):
    pass


class MisalignedInclusion(ValidationError):
    pass


class EmptyInclusion(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class SolverFailure(HiContrastError):
    pass


class EigenFailure(HiContrastError):
    pass


class SolvabilityViolated(HiContrastError):
    """Right-hand side is not orthogonal to the kernel of the stiff form."""


class NotPositiveDefinite(HiContrastError):
    pass


class PoleProximity(HiContrastError):
    pass


class TailBoundTooLarge(HiContrastError):
    pass


class EmptySet(HiContrastError):
    pass


class DegenerateFit(HiContrastError):
    pass
