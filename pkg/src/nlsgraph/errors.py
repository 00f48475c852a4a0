"""Exception hierarchy shared across the package."""


class NLSGraphError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(NLSGraphError, ValueError):
    pass


class InvalidInputError(NLSGraphError, ValueError):
    pass


class UnsupportedError(NLSGraphError, ValueError):
    pass


class UndefinedRatioError(NLSGraphError, ArithmeticError):
    pass


class CannotProjectError(NLSGraphError, ArithmeticError):
    pass


class RejectedInputError(NLSGraphError, ValueError):
    """Problem is ill-posed for the requested (p, mass), e.g. p=6 above the critical mass."""


class NumericalFailureError(NLSGraphError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SearchFailureError(NumericalFailureError):
    pass


class NoRectangleError(NumericalFailureError):
    """No rectangle with the required Miranda sign pattern could be found."""
