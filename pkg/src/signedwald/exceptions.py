"""Exception hierarchy.

Errors fall in two families. ``InputError`` subclasses flag malformed or
inconsistent input (the CLI maps them to exit code 2). ``NumericalError``
subclasses flag a well-formed problem that cannot be computed, such as a
covariance that is not positive semidefinite (exit code 3).
"""


class SignedWaldError(Exception):
    """Base class for all package errors."""


class InputError(SignedWaldError, ValueError):
    pass


class NumericalError(SignedWaldError, ArithmeticError):
    pass


class DimensionMismatch(InputError):
    pass


class NonFiniteInput(InputError):
    pass


class TooFewRows(InputError):
    pass


class EmptyArm(InputError):
    pass


class NoSurvivors(InputError):
    """An arm has no record without terminal event, so the score contrast is undefined."""


class ZeroNormal(InputError):
    pass


class EmptySample(InputError):
    pass


class EmptySubset(InputError):
    pass


class TooManyHypotheses(InputError):
    pass


class NullAlternative(InputError):
    """Efficiency ratio requested at a point where the alternative does not hold."""


class EmptyExperiment(InputError):
    pass


class NotPSD(NumericalError):
    pass


class Singular(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass


class DegenerateCorrelation(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass
