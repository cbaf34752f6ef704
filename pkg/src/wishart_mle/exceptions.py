"""Error types raised across the package.

Every error derives from :class:`WishartError` so callers can catch the whole
family at once. Numerical failures additionally derive from
:class:`NumericalFailure`, which the experiment harness counts per replication.
"""


class WishartError(Exception):
    """Base class for all package errors."""


class ValidationError(WishartError, ValueError):
    """Invalid user input (shapes, symmetry, parameter ranges)."""


class NumericalFailure(WishartError, ArithmeticError):
    """A computation could not be completed to the required accuracy."""


class NotPositiveDefinite(ValidationError):
    pass


class NotPsd(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class InvalidDegree(ValidationError):
    pass


class DegenerateDegree(ValidationError):
    pass


class NotTransformable(ValidationError):
    pass


class NotErgodic(ValidationError):
    pass


class NotInvertible(ValidationError):
    pass


class CaseParameterMismatch(ValidationError):
    pass


class MissingStats(ValidationError):
    pass


class DomainViolation(ValidationError):
    pass


class RankConditionViolated(ValidationError):
    pass


class SingularOperator(NumericalFailure):
    pass


class SingularLyapunov(NumericalFailure):
    pass


class SingularSystem(NumericalFailure):
    pass


class NumericalBreakdown(NumericalFailure):
    pass


class BlowUp(NumericalFailure):
    pass


class NonPositiveState(NumericalFailure):
    pass


class DegenerateDiagonal(NumericalFailure):
    pass


# the joint general solver reports a singular linear system under this name too
OperatorSingular = SingularSystem
