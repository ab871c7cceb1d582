"""Exception hierarchy.

Two families matter to callers: `InputError` (bad scenario or arguments,
CLI exit code 1) and `NumericalError` (a computation could not be carried
out, CLI exit code 2).
"""


class IsobeamError(Exception):
    """Base class for every error raised by this package."""


class InputError(IsobeamError, ValueError):
    pass


class NumericalError(IsobeamError, ArithmeticError):
    pass


class DimensionMismatch(InputError):
    pass


class InvalidNoise(InputError):
    pass


class InvalidLoadFactor(InputError):
    pass


class UnsupportedFullStream(InputError):
    """n_k = N_k with a power matrix that is not a multiple of identity."""


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    pass


class NotPSD(NumericalError):
    pass


class NotPD(NumericalError):
    pass


class SingularGram(NumericalError):
    pass


class QuadratureDivergence(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass
