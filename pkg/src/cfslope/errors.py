"""Exception hierarchy shared across the package."""


class CfslopeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CfslopeError):
    """Invalid run configuration: bad column names, flags, or option combinations."""


class DataError(CfslopeError):
    """Input data violates a structural requirement (e.g. non-binary transition)."""


class DegenerateFitError(CfslopeError):
    """A model fit is degenerate: constant response or rank-deficient design."""


class InsufficientDataError(CfslopeError):
    """Too few observations in the (sub)population required for a fit."""


class EstimationError(CfslopeError):
    """An estimation step produced unusable output (e.g. all tau outside (0,1))."""
