"""Exception hierarchy.

The CLI maps the three families to exit codes: :class:`ConfigError` -> 2,
:class:`DataError` -> 3, :class:`EstimationError` -> 4.
"""


class SemiMarkovError(Exception):
    """Base class for all package errors."""


class ConfigError(SemiMarkovError):
    """Invalid configuration or artifact specification."""


class UsageError(SemiMarkovError, ValueError):
    """An argument is out of range for the object it is applied to."""


class DataError(SemiMarkovError):
    """Input data cannot be used."""


class InputError(DataError):
    """Input stream is unreadable or malformed as a whole."""


class EmptyInputError(DataError):
    """Input contains no usable records."""


class FormatVersionError(DataError):
    """Artifact file has an unknown kind or version."""


class DegenerateGridError(DataError):
    """Values have too little spread to build a discretization grid."""


class EstimationError(SemiMarkovError):
    """Numerical or estimation failure."""


class UnobservedRowError(EstimationError):
    """A kernel row without any observed exit was used."""

    def __init__(self, state, msg=None):
        self.state = state
        super().__init__(msg or f"state {state} has no observed transitions")


class ZeroVarianceError(EstimationError):
    """Autocorrelation requested for a series with zero variance."""
