class QuantDimError(Exception):
    """ Base class of every error raised by quantdim """


class NonContractive(QuantDimError, ValueError):
    pass


class BadProbabilities(QuantDimError, ValueError):
    pass


class InfeasiblePacking(QuantDimError, ValueError):
    pass


class UnsupportedDim(QuantDimError, ValueError):
    pass


class UnsupportedOrientation(QuantDimError, ValueError):
    pass


class BadIndex(QuantDimError, ValueError):
    pass


class BadEps(QuantDimError, ValueError):
    pass


class NTooSmall(QuantDimError, ValueError):
    pass


class UnsupportedR(QuantDimError, ValueError):
    pass


class DimMismatch(QuantDimError, ValueError):
    pass


class IllConditioned(QuantDimError, ValueError):
    pass


class HypothesisViolated(QuantDimError, ValueError):
    pass


class ConfigError(QuantDimError, ValueError):
    pass


class DegenerateSample(QuantDimError, ArithmeticError):
    """ A sample (or an atom) sits exactly on a codepoint, so log d(x, codebook) = -inf """
    pass


class ToleranceUnreachable(QuantDimError, ArithmeticError):
    def __init__(self, message: str, bracket=None):
        super().__init__(message)
        self.bracket = bracket
