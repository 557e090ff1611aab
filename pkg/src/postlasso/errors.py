"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PostLassoError(Exception):
    exit_code = 1


class RankDeficient(PostLassoError):
    exit_code = 2


class NonPositiveWeight(PostLassoError):
    exit_code = 2


class DegenerateGeometry(PostLassoError):
    exit_code = 3


class DegenerateResponse(PostLassoError):
    exit_code = 2


class NoConvergence(PostLassoError):
    exit_code = 3


class EmptyRange(PostLassoError):
    exit_code = 3


class InfeasibleInit(PostLassoError):
    exit_code = 3


class InconsistentSolution(PostLassoError):
    exit_code = 3


class EmptyModel(PostLassoError):
    exit_code = 4


class InsufficientDraws(PostLassoError):
    exit_code = 5


class BudgetExhausted(PostLassoError):
    exit_code = 6

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(PostLassoError):
    exit_code = 2


class InputError(PostLassoError):
    """Malformed input files (ragged CSV, shape mismatch)."""

    exit_code = 2
