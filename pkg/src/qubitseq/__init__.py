"""Periodic unsharp measurement of a qubit: exact channels, coarse-grained N-series,
difference laws and continuum master equations."""

from .algebra import DomainError
from .model import ModelParams, derive

__version__ = "0.1.0"

__all__ = ["DomainError", "ModelParams", "derive", "__version__"]
