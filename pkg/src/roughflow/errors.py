"""Shared exception types."""


class NonConvergenceError(RuntimeError):
    """A refinement or quadrature sequence failed to settle."""


class ConfigurationError(ValueError):
    """A configuration or precondition check failed."""
