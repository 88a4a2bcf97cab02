"""Exception types shared across the package."""


class QpflowError(Exception):
    """Base class for all package errors."""


class RationalInputError(QpflowError):
    """Continued-fraction expansion terminated: the input is rational."""


class PrecisionExhaustedError(QpflowError):
    """A finite-precision frequency cannot certify further partial quotients."""


class DepthInsufficientError(QpflowError):
    """More convergents are required than the expansion provides."""


class ConstructionFailedError(QpflowError):
    """No valid CD subsequence could be certified within the available depth."""


class HermitianSymmetryError(QpflowError):
    """Coefficients violate the real-function symmetry c(-l,-k) = conj(c(l,k))."""


class InsufficientGridError(QpflowError):
    """Collocation aliasing residual exceeded tolerance; a finer grid is needed."""


class StripOverflowError(QpflowError):
    """A fiber shift is too large for the analyticity margin being consumed."""


class ZeroDivisorError(QpflowError):
    """A constant-coefficient solve hit a vanishing divisor <k, omega>."""


class DominanceError(QpflowError):
    """The direct dominance inequality failed for some mode; solve refused."""


class NeumannError(QpflowError):
    """Row-sum contraction factor >= 1/2 despite positive dominance margins."""


class BoundViolationError(QpflowError):
    """A certified bound was exceeded although its preconditions held."""


class ContractionFailedError(QpflowError):
    """An inner reduction pass missed its quadratic contraction target."""


class ScheduleInfeasibleError(QpflowError):
    """The requested run violates the smallness conditions of the schedule."""


class SearchBudgetExceededError(QpflowError):
    """Resonance search exhausted its lattice cap before reaching the target."""


class ConfigError(QpflowError):
    """An experiment configuration failed validation."""
