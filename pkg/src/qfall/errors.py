"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the physically or mathematically valid domain."""


class NumericsError(RuntimeError):
    """A numerical routine failed to reach its accuracy or convergence target."""


class ConfigError(ValueError):
    """A run configuration file or override could not be parsed or validated."""
