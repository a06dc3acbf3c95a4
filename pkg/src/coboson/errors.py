"""Exception hierarchy shared by all coboson modules."""


class CobosonError(Exception):
    """Base class for user-facing errors."""


class EmptyInput(CobosonError, ValueError):
    pass


class NegativeCoefficient(CobosonError, ValueError):
    pass


class NotNormalized(CobosonError, ValueError):
    pass


class OutOfRange(CobosonError, ValueError):
    pass


class InfeasiblePair(CobosonError, ValueError):
    """(P, lambda1) lies outside the region reachable by any distribution."""


class SamplingExhausted(CobosonError, RuntimeError):
    pass


class CancellationFailure(CobosonError, ArithmeticError):
    """Newton-Girard alternating sum lost all significant digits."""


class TooLarge(CobosonError, ValueError):
    pass


class Undefined(CobosonError, ArithmeticError):
    pass


class DegeneratePeaked(CobosonError, ValueError):
    """lambda1 == sqrt(P): the minimizing family degenerates to the peaked limit."""


class STooSmall(CobosonError, ValueError):
    pass


class IndexOutOfRange(CobosonError, IndexError):
    pass


class TouchesLambda1(CobosonError, ValueError):
    pass


class NotApplicable(CobosonError, ValueError):
    pass


class HierarchyViolation(AssertionError):
    """Internal consistency failure: the bound chain came out unordered.

    Deliberately not a CobosonError; it signals a bug, not bad input.
    """
