"""benchkit: turn a YAML experiment spec into a grid of batch jobs, run them
through pluggable scheduler adapters and DAG workflows, and aggregate
timers, results, and cloud-cost estimates."""

__version__ = "0.1.0"

from .errors import (
    BenchError,
    BudgetError,
    PolicyError,
    TransportError,
    UsageError,
    ValidationError,
)
from .specmodel import ExperimentPoint, ExperimentSpec, ValueSet, expand_grid, parse_spec

__all__ = [
    "__version__",
    "BenchError",
    "BudgetError",
    "PolicyError",
    "TransportError",
    "UsageError",
    "ValidationError",
    "ExperimentPoint",
    "ExperimentSpec",
    "ValueSet",
    "expand_grid",
    "parse_spec",
]
