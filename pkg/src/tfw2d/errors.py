"""Exception hierarchy shared by every module of the package."""


class TFWError(Exception):
    """Base class for all errors raised by tfw2d."""


class NonHermitianInput(TFWError, ValueError):
    """Spectral coefficients do not describe a real field."""


class InvalidExponent(TFWError, ValueError):
    pass


class NegativeDensity(TFWError, ValueError):
    pass


class GridMismatch(TFWError, ValueError):
    pass


class NotNeutral(TFWError, ValueError):
    """A source term carries a net charge where a neutral one is required."""


class SingularPoint(TFWError, ValueError):
    pass


class UnsampleableModel(TFWError, ValueError):
    pass


class DegenerateFit(TFWError, ValueError):
    pass


class EigensolverStalled(TFWError, RuntimeError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"eigensolver stalled after {iterations} iterations (residual {residual:.3e})"
        )


class ScfDiverged(TFWError, RuntimeError):
    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)
