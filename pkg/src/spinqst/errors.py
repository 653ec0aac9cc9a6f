"""Exception and warning classes.

Every error carries the CLI exit code it maps to: 2 for bad input,
3 when a numerical or physical precondition fails, 4 for I/O problems.
"""


class QSTError(Exception):
    exit_code = 1


class ValidationError(QSTError, ValueError):
    """Invalid sizes, parameters, indices or matrices."""

    exit_code = 2


class PhysicsError(QSTError):
    """A physical or numerical precondition of a reduction is not met."""

    exit_code = 3


class EmptyBulkError(PhysicsError):
    pass


class CannotNormalizeError(PhysicsError):
    pass


class DisconnectedEndsError(PhysicsError):
    pass


class ResonanceError(PhysicsError):
    """An end spin is resonant with a bulk mode it couples to."""


class NoResonanceError(PhysicsError):
    pass


class DegeneracyError(PhysicsError):
    pass


class IndeterminateFormError(PhysicsError):
    pass


class DegenerateWeightsError(PhysicsError):
    pass


class NoCouplingError(PhysicsError):
    pass


class NetworkIOError(QSTError, OSError):
    exit_code = 4


class DegeneracyWarning(UserWarning):
    pass


class EndCouplingWarning(UserWarning):
    """A direct end-end coupling was dropped during partitioning."""


class NoTransportWarning(UserWarning):
    pass
