"""Shared exception types."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation (non-finite point,
    non-SPD matrix, inconsistent dimensions, bad parameter range)."""


class UnsupportedNoiseError(RuntimeError):
    """The requested quantity (e.g. a closed-form covariance) is not
    available for this noise family."""


class ConfigError(ValueError):
    """A scenario configuration file is malformed or inconsistent."""
