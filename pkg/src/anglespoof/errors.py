"""Exception types shared across the library."""


class ConfigError(Exception):
    """Raised when a configuration file or override is invalid."""


class DegenerateGeometryError(ValueError):
    """Raised when scene positions coincide and path angles are undefined."""


class NumericalFailureError(RuntimeError):
    """Raised when an iterative routine produces non-finite or infeasible values."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
