"""Exception hierarchy shared by all modules."""


class NonlocalBSDEError(Exception):
    """Base class for package errors."""


class InvalidParameterError(NonlocalBSDEError, ValueError):
    """An argument is outside its admissible range."""


class ConfigurationError(NonlocalBSDEError, ValueError):
    """A solver configuration violates a precondition of the scheme."""


class NumericalFailureError(NonlocalBSDEError, ArithmeticError):
    """Non-finite values or a nodal solve that failed to converge."""


class UnsupportedProblemError(NonlocalBSDEError):
    """The requested method cannot handle this problem."""
