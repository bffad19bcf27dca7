"""Exception types raised across the package."""


class RabiSenseError(Exception):
    """Base class for all package errors."""


class ValidationError(RabiSenseError, ValueError):
    """Invalid physical or numerical parameters."""


class DimensionMismatch(RabiSenseError, ValueError):
    pass


class TruncationError(RabiSenseError):
    """Population leaked into the top of the truncated Fock space."""


class DegenerateGroundState(RabiSenseError):
    pass


class DegenerateLevels(RabiSenseError):
    pass


class EigensolverFailure(RabiSenseError):
    pass


class ToleranceNotMet(RabiSenseError):
    """The adaptive integrator could not satisfy the requested tolerances."""


class PositivityViolation(RabiSenseError):
    pass


class ZeroVariance(RabiSenseError, ZeroDivisionError):
    pass


class NumericalFailure(RabiSenseError):
    """Umbrella used by the CLI to map failures onto exit code 2."""


NUMERICAL_ERRORS = (
    TruncationError,
    DegenerateGroundState,
    DegenerateLevels,
    EigensolverFailure,
    ToleranceNotMet,
    PositivityViolation,
    ZeroVariance,
    NumericalFailure,
)
