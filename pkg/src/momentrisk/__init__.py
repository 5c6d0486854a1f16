"""Realized higher moments, horizon decomposition and cross-sectional pricing tests."""

from momentrisk.errors import (
    CollinearityError,
    ConfigError,
    DataError,
    DependencyError,
    MomentRiskError,
    NumericalError,
)

__version__ = "0.1.0"

__all__ = [
    "CollinearityError",
    "ConfigError",
    "DataError",
    "DependencyError",
    "MomentRiskError",
    "NumericalError",
    "__version__",
]
