"""Hopf decompositions of group actions and horospheric limit sets.

Submodules
----------
ergodic
    Countable weighted actions and their Hopf partition.
hyperbolic
    Gromov products, Busemann cocycles and horoballs on abstract models.
freegroup
    Reduced words, Stallings graphs and the boundary of F_k.
disk
    The Poincare disk, Moebius groups and orbit balls.
classifier
    Conservative/dissipative classification of boundary points.
cli
    Command-line entry points.
"""

from . import classifier, disk, ergodic, freegroup, hyperbolic
from .errors import (
    CapacityError,
    ConfigError,
    DecisionConflictError,
    HorohopfError,
    InvalidPresetError,
    InvariantViolation,
    MalformedWordError,
    NumericDegeneracyError,
    StreamAuditError,
    UnsupportedBoundaryPointError,
)

__version__ = "0.1.0"
