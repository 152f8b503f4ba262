"""Exception hierarchy shared across the package.

Every failure the CLI can surface belongs to one of five coarse classes,
each with a fixed process exit code: 2 usage, 3 validation, 4 transport,
5 policy, 6 over-budget. Library code raises the specific subclasses.
"""
from __future__ import annotations


class BenchError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(BenchError):
    exit_code = 2


class ValidationError(BenchError):
    exit_code = 3


class TransportError(BenchError):
    """A resource could not be reached; usually retryable."""

    exit_code = 4


class PolicyError(BenchError):
    """A site queue policy would be violated."""

    exit_code = 5


class BudgetError(BenchError):
    exit_code = 6


class SpecError(ValidationError):
    """An experiment specification failed to parse or validate."""


class UndefinedVariable(ValidationError):
    """A dot-notation variable path could not be resolved."""

    def __init__(self, path: str, detail: str | None = None):
        self.path = path
        super().__init__(detail or f"undefined variable '{path}'")


class NotAScalar(ValidationError):
    """A variable path resolved to a collection instead of a scalar."""

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"'{path}' resolves to a collection, not a scalar")


class ScanError(ValidationError):
    """A template could not be scanned for placeholders."""


class RenderError(ValidationError):
    """Strict template rendering hit an unresolvable placeholder."""


class GenerationError(ValidationError):
    """Experiment directory materialization failed or was refused."""


class WorkflowError(ValidationError):
    """A workflow document failed to parse or validate."""


class CycleError(WorkflowError):
    """The workflow dependency graph contains a cycle."""

    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        loop = " -> ".join(self.cycle + self.cycle[:1])
        super().__init__(f"workflow contains a cycle: {loop}")


class SubmitError(TransportError):
    """A job submission command failed."""


class TimerError(ValidationError):
    """Stopwatch misuse, e.g. stopping a timer that never started."""


class RepositoryError(ValidationError):
    """A results repository operation failed validation."""


class CostError(ValidationError):
    """A cost scenario or plan is invalid."""
