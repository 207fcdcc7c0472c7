"""Exception types shared by all modules.

ValidationError maps to CLI exit code 1, NumericalError to exit code 2.
"""


class ValidationError(ValueError):
    """Bad input: violated precondition, malformed argument, guard failure."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its tolerance.

    Carries the best residual (or error estimate) that was achieved, so
    callers can report how far off the computation ended up.
    """

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (achieved residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual
