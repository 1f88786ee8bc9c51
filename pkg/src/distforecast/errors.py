"""Exception hierarchy shared by all modules."""


class DistForecastError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(DistForecastError, ValueError):
    """Invalid user input or configuration (CLI exit code 2)."""


class NumericalError(DistForecastError, ArithmeticError):
    """Numerical failure during estimation or testing (CLI exit code 3)."""


# data_io
class MissingFile(ConfigError, FileNotFoundError):
    pass


class ParseError(ConfigError):
    def __init__(self, line, message=""):
        self.line = line
        super().__init__(f"line {line}: {message}" if message else f"line {line}")


class NonMonotoneDates(ConfigError):
    pass


class EmptySeries(ConfigError):
    pass


class IoError(DistForecastError, OSError):
    pass


class AlignmentError(ConfigError):
    pass


# volatility / partition
class DegenerateSeries(NumericalError):
    pass


class DomainError(ConfigError):
    pass


class NonPositiveVariance(ConfigError):
    pass


# estimation
class PerfectSeparation(NumericalError):
    pass


class NonConvergence(NumericalError):
    def __init__(self, iterations, grad_norm):
        self.iterations = iterations
        self.grad_norm = grad_norm
        super().__init__(f"no convergence after {iterations} iterations "
                         f"(gradient norm {grad_norm:.3g})")


class RankDeficientBasis(ConfigError):
    pass


class Step1Failure(NumericalError):
    def __init__(self, threshold, cause=None):
        self.threshold = threshold
        self.cause = cause
        super().__init__(f"separate logit failed at threshold {threshold}: {cause}")


# interpolation / evaluation / backtest
class NonMonotoneInput(ConfigError):
    pass


class InsufficientData(ConfigError):
    pass


class SingularCovariance(NumericalError):
    pass


class RangeError(ConfigError):
    pass


class EmptyRange(ConfigError):
    pass
