class TcsLossError(Exception):
    """Base class for every error raised by tcsloss."""


class ArityError(TcsLossError):
    """Pauli strings of the wrong length were combined."""


class ValidationError(TcsLossError):
    """An input violates a documented precondition."""


class MustMergeError(TcsLossError):
    """A raw cell measurement product was requested while one of its faces is unusable."""


class InfeasibleMatchingError(TcsLossError):
    """No perfect matching exists for the given detection events."""


class NonSuppressingError(TcsLossError):
    """Extrapolation inputs do not decrease with distance."""


class DomainError(TcsLossError):
    """Values outside a function's mathematical domain."""


class ConfigError(TcsLossError):
    """Bad configuration file or flag combination."""
