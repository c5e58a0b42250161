"""Exception hierarchy shared across the package."""


class AmeefDckfError(Exception):
    """Base class for all package errors."""


class ParameterError(AmeefDckfError, ValueError):
    """Invalid argument value (non-positive width, empty vector, ...)."""


class SingularMatrixError(AmeefDckfError):
    """A factorization or solve failed beyond recovery.

    Carries condition diagnostics of the offending matrix when available.
    """

    def __init__(self, message, matrix=None, condition=None):
        super().__init__(message)
        self.matrix = matrix
        self.condition = condition


class ModelEvaluationError(AmeefDckfError):
    """A model map (f or h) returned non-finite values."""


class TopologyError(AmeefDckfError):
    """Invalid consensus graph (unreachable follower, leader without
    follower out-edges, ...)."""


class StepSizeError(AmeefDckfError):
    """Consensus step size at or above the admissible bound."""


class ProtocolViolationError(AmeefDckfError):
    """A push-sum weight became non-positive; indicates invalid weights."""


class ConfigError(AmeefDckfError):
    """Malformed scenario configuration; carries a field diagnostic."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
