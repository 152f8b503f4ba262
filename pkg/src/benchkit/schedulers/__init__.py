"""Uniform submit/status/cancel abstraction over batch schedulers and transports."""

from .base import (
    TERMINAL_STATES,
    CommandResult,
    JobHandle,
    JobState,
    LocalRunner,
    QueuePolicy,
    ResourceTarget,
    SchedulerAdapter,
    SshRunner,
)
from .lsf import LsfAdapter
from .mock import MockScheduler
from .resources import AdapterPool, BUILTIN_TARGETS, load_resources, make_adapter, parse_resources
from .shell import LocalShellAdapter, SshAdapter
from .slurm import SlurmAdapter

__all__ = [
    "TERMINAL_STATES",
    "CommandResult",
    "JobHandle",
    "JobState",
    "LocalRunner",
    "QueuePolicy",
    "ResourceTarget",
    "SchedulerAdapter",
    "SshRunner",
    "LsfAdapter",
    "MockScheduler",
    "AdapterPool",
    "BUILTIN_TARGETS",
    "load_resources",
    "make_adapter",
    "parse_resources",
    "LocalShellAdapter",
    "SshAdapter",
    "SlurmAdapter",
]
