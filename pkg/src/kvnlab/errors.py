"""Exception hierarchy shared by every kvnlab module."""


class KvnLabError(Exception):
    """Base class for all errors raised by kvnlab."""


class ConfigurationError(KvnLabError, ValueError):
    """Invalid parameters: inverted bounds, tiny counts, step-bound violations."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DegenerateStateError(KvnLabError, ValueError):
    """A state with zero norm was handed to an operation that needs a nonzero one."""


class GridMismatchError(KvnLabError, ValueError):
    """Two objects that must share a grid (or representation) do not."""


class NumericDomainError(KvnLabError, ValueError):
    """An observable or field evaluated to a non-finite value on the grid."""


class OutflowError(KvnLabError, RuntimeError):
    """Characteristics carried more than the allowed mass off a bounded grid."""

    def __init__(self, message, lost_fraction):
        super().__init__(message)
        self.lost_fraction = lost_fraction


class TruncationError(KvnLabError, ValueError):
    """A wave function is not negligible at the edges of its grid."""

    def __init__(self, message, edge_value):
        super().__init__(message)
        self.edge_value = edge_value


class PreconditionError(KvnLabError, ValueError):
    """An operation's documented precondition does not hold for its input."""


class UnsupportedError(KvnLabError, NotImplementedError):
    """The requested Hamiltonian kind or grid layout is not handled."""
