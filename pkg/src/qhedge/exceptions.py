"""Exception hierarchy shared by every module."""


class QHedgeError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(QHedgeError, ValueError):
    """Invalid market, model-set or run configuration."""


class DomainError(QHedgeError, ValueError):
    """An argument lies outside the domain of an operation."""


class StructuralError(QHedgeError, ValueError):
    """Inconsistent array dimensions or non-finite coefficients."""


class ResourceLimitError(QHedgeError, RuntimeError):
    """A configured cap (pivots, vertices, enumeration size) was exceeded."""


class SolverError(QHedgeError, RuntimeError):
    """A linear program ended in an unexpected state."""


class ArbitrageError(QHedgeError, RuntimeError):
    """The discretized market admits no strictly positive martingale measure."""
