"""Exception hierarchy shared across the package."""


class ZipanelError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(ZipanelError):
    """A CSV or JSON input does not match its declared schema."""


class DataError(ZipanelError):
    """Input data violates a content requirement (duplicates, bad values,
    incomplete panels, degenerate responses)."""


class ConfigError(ZipanelError):
    """A configuration object is internally inconsistent or references
    unknown columns, covariates or levels."""


class UsageError(ZipanelError):
    """An operation was called out of order or with arguments outside its
    contract (wrong state, non-nested models, invalid windows)."""


class NumericalError(ZipanelError):
    """A linear-algebra step failed; the message carries a conditioning
    report where available."""


class ConvergenceError(ZipanelError):
    """An iterative fit did not converge within its iteration budget."""


class InferenceError(ZipanelError):
    """Too many resampling replicates failed to produce a usable fit."""


class PerfectSeparationWarning(UserWarning):
    """The logistic fit shows diverging linear predictors; the penalized
    solution is still returned."""


class ExtrapolationWarning(UserWarning):
    """A prediction point fell outside the training range of a spline and
    was clamped to the boundary knot."""
