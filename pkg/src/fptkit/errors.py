"""Exception and warning types raised across the toolkit."""


class FptError(Exception):
    """Base class for toolkit errors."""


class NonConvergence(FptError, ArithmeticError):
    """An iterative method (series, bracketing, fixed point) failed to converge."""


class DomainError(FptError, ValueError):
    """Input outside the mathematical domain of an operation."""


class IntegralOverflow(FptError, OverflowError):
    """Result not representable as a double."""


class DegenerateSample(FptError, ValueError):
    """Sample cannot be tested (all equal, or mapped onto 0 or 1 by the null cdf)."""


class BudgetTooSmall(FptError, ValueError):
    """Monte Carlo budget below the minimum the estimator supports."""


class GridTooNarrow(FptError):
    """Threshold landed too close to the edge of the predictor grid."""


class NonMonotone(FptError):
    """Gain function lost monotonicity, or never crosses the cost level."""


class CapReachedWarning(RuntimeWarning):
    """Too many simulated paths hit the step cap; estimates are biased."""
