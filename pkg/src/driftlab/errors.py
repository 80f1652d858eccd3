"""Exception hierarchy with machine-readable error codes.

Every error carries a ``code`` string that the CLI maps into its JSON error
report. Numerical failure modes (blow-up, loss of positive definiteness)
additionally record the time at which they were detected.
"""

from __future__ import annotations


class DriftlabError(Exception):
    """Base class for all library errors."""

    code = "ERROR"


class ParameterError(DriftlabError):
    """Model parameters violate a documented invariant."""

    code = "PARAMS_INVALID"


class ScheduleError(DriftlabError):
    """Expert schedule is malformed or does not align with the time grid."""

    code = "SCHEDULE_INVALID"


class MissingObservationError(DriftlabError):
    """A filter regime requires observations the path bundle does not carry."""

    code = "MISSING_OBSERVATION"


class DomainError(DriftlabError):
    """Mathematical precondition violated (non-PD matrix, divergent integral)."""

    code = "DOMAIN"


class IntegrationError(DriftlabError):
    """Numerical ODE integration failed (non-finite values or PSD loss).

    ``t`` is the first node at which the failure was detected.
    """

    code = "INTEGRATION_BLOWUP"

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class WellPosednessError(DriftlabError):
    """Value-function well-posedness failed (explosion / PD condition).

    For power utility with exponent in (0, 1) the coefficient Riccati system
    can blow up before time 0; ``t`` reports the detected explosion time or
    the first node where a required matrix stopped being positive definite.
    """

    code = "WELL_POSEDNESS"

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class OrderingError(DriftlabError):
    """An information-ordering identity failed beyond tolerance."""

    code = "ORDERING"


class ConfigError(DriftlabError):
    """Scenario configuration document is invalid."""

    code = "CONFIG_INVALID"
