"""Exception types shared across the package."""


class MDRAError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MDRAError, ValueError):
    """Invalid hyperparameter or structural configuration."""


class ShapeError(MDRAError, ValueError):
    """Array dimensions do not match what the operation expects."""


class DataError(MDRAError, ValueError):
    """Input data is non-finite, too short, or otherwise unusable."""


class InvalidResponsibilitiesError(MDRAError, ValueError):
    """Responsibility matrix is not row-stochastic."""


class DivergenceError(MDRAError, FloatingPointError):
    """Training produced a non-finite loss.

    Attributes
    ----------
    iteration : int
        Outer iteration at which the failure was detected.
    signal_ids : list of int
        Ids of signals whose loss terms were non-finite.
    """

    def __init__(self, message, iteration=-1, signal_ids=()):
        super().__init__(message)
        self.iteration = iteration
        self.signal_ids = list(signal_ids)
