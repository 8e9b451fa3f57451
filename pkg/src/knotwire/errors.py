"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad input or a
violated geometric invariant) and :class:`NumericalError` (a solver or a
quadrature that did not reach its tolerance).  The command line maps them
to distinct exit codes.
"""


class KnotWireError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(KnotWireError, ValueError):
    pass


class NumericalError(KnotWireError, ArithmeticError):
    pass


# curves
class ValidationFailed(ValidationError):
    pass


class InflectionPoint(ValidationError):
    pass


class CurvesTooClose(ValidationError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class NotNearInteger(NumericalError):
    pass


# tube
class OutOfDisk(ValidationError):
    pass


class OutsideTube(ValidationError):
    pass


class AmbiguousProjection(ValidationError):
    pass


# current
class NotPeriodic(NumericalError):
    pass


class OdeTolerance(NumericalError):
    pass


# biot_savart
class TooCloseToWire(ValidationError):
    pass


class TooCloseToSurface(ValidationError):
    pass


# synth
class ConnectorCollision(ValidationError):
    pass


class OrientationConflict(ValidationError):
    pass


class RadiusTooLarge(ValidationError):
    pass


class SelfIntersection(ValidationError):
    pass


# dynamics
class LeftDomain(NumericalError):
    pass


class StepUnderflow(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    pass


class TransversalityLost(NumericalError):
    pass


class NotAGraph(NumericalError):
    pass


class NoReturn(NumericalError):
    pass


# knots
class NoGenericDirection(NumericalError):
    pass


class DegenerateDiagram(ValidationError):
    pass


# pipelines
class ConvergenceGateFailed(NumericalError):
    """The wire field is not yet close enough to the surface-current field."""
