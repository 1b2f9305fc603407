"""Exception hierarchy.

Every exception raised by the package derives from :class:`NMKError` and
carries the process exit code the CLI uses for it:

====  =======================  ==============================================
code  class                    meaning
====  =======================  ==============================================
2     ConfigError              bad config file / missing constants
3     PreconditionError        an operation was called outside its domain
4     RuntimeFailure           the computation itself broke down
5     VerificationFailure      a tracked inequality was violated
====  =======================  ==============================================
"""


class NMKError(Exception):
    exit_code = 4


class ConfigError(NMKError, ValueError):
    exit_code = 2


class PreconditionError(NMKError, ValueError):
    exit_code = 3


class RuntimeFailure(NMKError, ArithmeticError):
    exit_code = 4


class VerificationFailure(NMKError):
    exit_code = 5


# graded spaces
class InvalidParameterError(PreconditionError):
    pass


class InvalidOperandsError(PreconditionError):
    pass


class NearSingularInverseError(RuntimeFailure):
    pass


# Nash-Moser
class IncompleteConstantsError(ConfigError):
    pass


class BelowMinimumScaleError(PreconditionError):
    pass


class HypothesisViolatedError(PreconditionError):
    """Raised only in strict mode; otherwise the run is flagged."""


class _TraceCarrying(RuntimeFailure):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class BallExitError(_TraceCarrying):
    pass


class DivergenceError(_TraceCarrying):
    pass


# models
class OracleUnavailableError(RuntimeFailure):
    pass


# edge expansion
class UnsupportedResonanceError(PreconditionError):
    pass


class InvalidDegreeError(PreconditionError):
    pass


class DivergentPrimitiveError(PreconditionError):
    pass


# coefficients
class DegenerateDirectionError(PreconditionError):
    pass


class DimensionExcludedError(PreconditionError):
    pass


class InsufficientRadialSpanError(PreconditionError):
    pass


class MonodromyError(PreconditionError):
    pass


EXIT_CODES = {
    "ok": 0,
    "config-error": ConfigError.exit_code,
    "precondition-failure": PreconditionError.exit_code,
    "runtime-failure": RuntimeFailure.exit_code,
    "verification-failure": VerificationFailure.exit_code,
}
