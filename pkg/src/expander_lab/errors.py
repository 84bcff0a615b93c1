"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each class carries the code it should
produce when it escapes a command.
"""


class ExpanderLabError(Exception):
    exit_code = 1


class ConfigError(ExpanderLabError, ValueError):
    exit_code = 2


class DomainError(ExpanderLabError, ValueError):
    """An argument lies outside the domain where an operation is defined."""

    exit_code = 2


class UnsupportedError(DomainError):
    """The request is well-formed but outside what is implemented."""


class UnsupportedModulusError(UnsupportedError):
    pass


class CapExceededError(ExpanderLabError):
    """A configured size cap (group order, DP states, word tree) was hit."""

    exit_code = 3

    def __init__(self, message, reached=None):
        super().__init__(message)
        self.reached = reached


class ConvergenceError(ExpanderLabError):
    exit_code = 3

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InvariantViolation(ExpanderLabError):
    """A property guaranteed by the theory failed on a computed instance."""

    exit_code = 4
