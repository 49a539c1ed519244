"""Sorting and searching with persistent random comparison faults."""

from .core import (
    BitBudgetExceeded,
    DislocationReport,
    FaultModel,
    FaultsortError,
    InvalidComparisonError,
    InvalidModelError,
    Outcome,
    RunStats,
    Sequence,
    SizeError,
    adversarial_order,
    dislocation_report,
    observe,
)

__version__ = "0.1.0"
