"""Exception hierarchy shared by all modules."""


class HorohopfError(Exception):
    """Base class for every error raised by the package."""


class MalformedWordError(HorohopfError, ValueError):
    """A word contains a symbol outside the generator alphabet."""


class UnsupportedBoundaryPointError(HorohopfError, ValueError):
    """The model cannot represent or approach the requested boundary point."""


class NumericDegeneracyError(HorohopfError, ArithmeticError):
    """A floating point evaluation is too close to a singularity."""


class InvalidPresetError(HorohopfError, ValueError):
    """A group preset failed validation (e.g. the ping-pong check)."""


class CapacityError(HorohopfError):
    """An enumeration exceeded its configured size cap.

    The elements collected so far are kept in ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InvariantViolation(HorohopfError):
    """A checked mathematical invariant failed on concrete data."""


class StreamAuditError(InvariantViolation):
    """A stream density violates its declared quasi-conformality bound."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DecisionConflictError(InvariantViolation):
    """An exact decision disagrees with the heuristic label."""


class ConfigError(HorohopfError, ValueError):
    """A configuration document is malformed."""
