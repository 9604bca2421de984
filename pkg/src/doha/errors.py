"""Exception types shared by every module."""


class DohaError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(DohaError, ValueError):
    """An argument is outside its admissible range or has the wrong shape."""


class DataError(DohaError, ValueError):
    """Input data is unusable (non-finite values, no in-band power, ...)."""


class StateError(DohaError, RuntimeError):
    """An object is not in a state that permits the requested operation."""


class NumericError(DohaError, ArithmeticError):
    """A computation produced non-finite values."""
