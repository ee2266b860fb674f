class ValidationError(ValueError):
    """Input violates the model (bad JSON field, utility out of range, ...)."""


class InvariantError(RuntimeError):
    """An internal guarantee failed. Always a bug."""


class InstanceTooLarge(ValueError):
    """Exact enumeration was requested beyond the configured atom budget."""
