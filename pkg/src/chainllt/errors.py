"""Exception hierarchy shared by all chainllt modules.

Two broad categories drive the CLI exit codes: ``UsageError`` subclasses
signal bad inputs or configs, ``NumericError`` subclasses signal a numeric
procedure that could not deliver its contract.
"""


class ChainLLTError(Exception):
    """Base class for all library errors."""


class UsageError(ChainLLTError):
    """Invalid input data or parameters (CLI exit code 2)."""


class NumericError(ChainLLTError):
    """A numeric procedure failed to meet its tolerance (CLI exit code 3)."""


class NonConservative(UsageError):
    """A generator row does not sum to zero."""


class NegativeRate(UsageError):
    """A generator has a negative off-diagonal entry."""


class Reducible(UsageError):
    """The rate graph is not strongly connected (no unique positive invariant law)."""


class AlphaOutOfRange(UsageError):
    """Observable evaluated outside the unit time argument interval."""


class DimensionMismatch(UsageError):
    """Incompatible array shapes between model, observable or operator data."""


class HorizonMismatch(UsageError):
    """A path is shorter than the time horizon an integral requires."""


class ConfigError(UsageError):
    """Malformed or inconsistent experiment configuration."""


class OdeToleranceFailure(NumericError):
    """Step-doubling disagreement of the propagator solve above tolerance."""


class GapTooSmall(NumericError):
    """Dominant eigenvalue not separated enough for a stable decomposition."""


class NonConvergence(NumericError):
    """An eigenvalue routine failed to converge."""


class SingularSystem(NumericError):
    """A linear solve hit an unexpectedly singular system."""


class NotPositiveDefinite(NumericError):
    """A matrix that must be positive-definite is not."""


class AbsorbingState(NumericError):
    """A path simulation reached a state with no outgoing rate."""
