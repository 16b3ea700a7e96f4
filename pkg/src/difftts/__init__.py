"""Generalized diffusion toolkit for a toy diffusion text-to-feature generator."""

from difftts.errors import (
    ConfigError,
    ContractError,
    DomainError,
    DiffTTSError,
    NumericalError,
    ShapeError,
)
from difftts.schedule import DiffusionSpec, NoiseSchedule

__all__ = [
    "ConfigError",
    "ContractError",
    "DiffusionSpec",
    "DomainError",
    "DiffTTSError",
    "NoiseSchedule",
    "NumericalError",
    "ShapeError",
]

__version__ = "0.1.0"
