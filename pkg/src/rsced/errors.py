"""Exception hierarchy shared across the package."""


class RscedError(Exception):
    """Base class for every error raised by this package."""


# network
class IslandedNetwork(RscedError):
    pass


class SingularMatrix(RscedError):
    pass


# lp
class CyclingDetected(RscedError):
    pass


class NumericalFailure(RscedError):
    pass


# model
class InvalidAlpha(RscedError):
    pass


class SolveFailed(RscedError):
    """An LP built by the model layer did not reach optimality."""

    def __init__(self, status, message=""):
        self.status = status
        super().__init__(message or f"LP solve ended with status {status.value}")


class InfeasibleProblem(SolveFailed):
    pass


class UnboundedProblem(SolveFailed):
    pass


# pricing
class MissingDuals(RscedError):
    pass


class TheoremViolation(RscedError):
    pass


# benders
class NotDecomposable(RscedError):
    pass


class SubproblemUnbounded(RscedError):
    pass


class IterationLimit(RscedError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ObjectiveMismatch(RscedError):
    pass


# case files
class ParseError(RscedError):
    pass


class ValidationError(RscedError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnsupportedSchemaVersion(ValidationError):
    pass


class ProbabilityMassExceeded(ValidationError):
    """Contingency probabilities sum to more than one."""

    def __init__(self, message, path="scenario_config"):
        super().__init__(path, message)
