"""Exception hierarchy shared by all pipeline stages.

The CLI maps each family to an exit code: validation problems exit with 2,
numerical failures with 3 and file problems with 4.
"""


class RoughNetError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ValidationError(RoughNetError, ValueError):
    exit_code = 2


class NumericalError(RoughNetError, ArithmeticError):
    exit_code = 3


class RiccatiDivergenceError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GridAlignmentError(ValidationError):
    pass


class AccuracyError(NumericalError):
    pass


class ArbitrageError(NumericalError):
    pass


class DataQualityError(NumericalError):
    pass


class IOFailure(RoughNetError, OSError):
    exit_code = 4


class ParseError(IOFailure):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SamplingError(NumericalError):
    """A perturbation sample too degenerate to fit a surrogate on."""
