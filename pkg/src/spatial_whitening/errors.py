"""Exception hierarchy shared by all modules."""


class WhiteningError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(WhiteningError, ValueError):
    pass


class NumericFailure(WhiteningError, ArithmeticError):
    pass


class DegenerateRowError(NumericFailure):
    """Cofactor vector of a row collapsed to (numerically) zero."""


class SingularUpdateError(NumericFailure):
    """Sherman-Morrison denominator too small for a safe rank-one update."""


class MeanDegenerateError(NumericFailure):
    """A row of Z sums to ~0, so the whitened variable carries no signal mean."""


class DegenerateEigenvectorError(NumericFailure):
    """An eigenvector of the covariance is orthogonal to the all-ones vector."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class OptimizationError(WhiteningError):
    """Every restart of the optimizer failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class UndefinedEstimateError(WhiteningError):
    """No sensor is active, so the fusion center has nothing to combine."""
