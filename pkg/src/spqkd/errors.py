"""Exception hierarchy.

Three branches map onto the CLI exit codes: configuration problems (2),
model/analysis problems (3) and fitting problems (4).
"""


class ConfigError(Exception):
    """Scenario/config file is missing, malformed or violates the schema."""


class ModelError(Exception):
    """Base class for physics-model and analysis errors."""


class InvalidStatistics(ModelError):
    """mu/g2(0) combination has no valid 3-point photon-number distribution."""


class EmptyStream(ModelError):
    """A time-tag stream lacks the events required for the operation."""


class UnmatchedEvent(ModelError):
    """A detection cannot be assigned to any emitted pulse."""


class EmptyKey(ModelError):
    """A sifted key with no entries cannot yield an error rate."""


class DomainError(ModelError):
    """Argument outside the mathematical domain of the function."""


class OutOfTable(ModelError):
    """Error rate above the tabulated error-correction range."""


class SecurityViolation(ModelError):
    """Multi-photon probability exceeds the click probability."""


class InsufficientCoincidences(ModelError):
    """Correlation histogram too sparse for a g2 estimate."""


class FitError(Exception):
    """Base class for parameter-recovery failures."""


class FitDiverged(FitError):
    """Nonlinear fit failed to improve on its starting point."""


class InsufficientDecay(FitError):
    """Histogram tail too short above background to fit a lifetime."""


class Infeasible(FitError):
    """Measured QBER lies below the dark-count floor; no q can produce it."""
