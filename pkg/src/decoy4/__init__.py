"""Finite-key analysis of efficient four-intensity decoy-state BB84."""

from .baseline3 import SourceConfig3, evaluate3
from .bounds import (
    KeyRateReport,
    ObservedCounts,
    SecurityParams,
    SourceConfig,
    evaluate,
)
from .channel import SystemParams, expected_counts, transmittance

__version__ = "0.1.0"

__all__ = [
    "KeyRateReport",
    "ObservedCounts",
    "SecurityParams",
    "SourceConfig",
    "SourceConfig3",
    "SystemParams",
    "evaluate",
    "evaluate3",
    "expected_counts",
    "transmittance",
]
