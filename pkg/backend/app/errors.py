"""Exception hierarchy shared by the services, the CLI and the HTTP router."""


class SimulationError(Exception):
    """Base class for simulator failures"""


class InvalidStateError(SimulationError, ValueError):
    """Input that violates a state, operator or document invariant"""


class IncompleteMeasurementError(InvalidStateError):
    """Kraus set whose completeness relation does not hold"""


class InvalidPlanError(InvalidStateError):
    """LOCC round plan that cannot be executed"""


class InvariantViolation(SimulationError):
    """A post-condition the simulation guarantees failed at run time"""
