"""Exception hierarchy shared across the package."""


class CfmcError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(CfmcError, ValueError):
    """An argument violates a documented precondition."""


class SingularMatrixError(CfmcError):
    """A kernel system could not be factorised; a larger regularisation
    parameter is usually the fix."""


class NumericalError(CfmcError):
    """A computation produced a result outside its numerical tolerance."""


class DataFormatError(CfmcError):
    """A data file could not be parsed or failed validation."""
