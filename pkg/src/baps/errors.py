"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameter or configuration value."""


class DomainError(ValueError):
    """Argument outside the range where an operation is defined."""
