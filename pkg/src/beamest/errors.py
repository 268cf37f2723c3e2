"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value or inconsistent configuration combination."""


class NumericalDegeneracyError(ArithmeticError):
    """A computation hit a numerically degenerate case (vanishing denominator)."""
