"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Shapes of the design, signal or response do not agree."""


class DesignParseError(ValueError):
    """A design CSV file could not be parsed."""


class EnumerationBudgetError(RuntimeError):
    """Exact support enumeration would exceed the configured budget."""


class SingularSupportError(ValueError):
    """The Gram block on a support is singular."""


class ConfigError(ValueError):
    """Invalid scenario configuration or command-line override."""
