"""Disorder chaos in diluted and mixed p-spin models: exact enumeration,
zero-temperature Parisi and two-system bound solvers, and control checks."""

from .errors import CapacityError, DomainError, NumericError
from .mixing import MixingPair, StepGamma

__all__ = ["CapacityError", "DomainError", "NumericError", "MixingPair", "StepGamma"]
__version__ = "0.1.0"
