"""Finite-statistics decoy-state QKD simulator and estimator suite."""

from .channel import ChannelParams, DecoyScheme, PulseSet
from .estimators import ObservedCounts, YieldBound, YieldVector
from .fluctuation import ConfidenceSpec, FeasibilityReport

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "ConfidenceSpec",
    "DecoyScheme",
    "FeasibilityReport",
    "ObservedCounts",
    "PulseSet",
    "YieldBound",
    "YieldVector",
]
