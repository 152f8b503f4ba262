"""Common types for the scheduler abstraction.

Adapters present a uniform submit/status/cancel facade over workload
managers (SLURM, LSF), plain transports (SSH, local shell), and a
deterministic mock queue. All remote interaction goes through a command
runner so every adapter can be exercised from recorded transcripts
without a live cluster.
"""
from __future__ import annotations

import subprocess
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any

from ..errors import PolicyError, TransportError, ValidationError

KINDS = ("local", "ssh", "slurm", "lsf", "mock")
HOSTLESS_KINDS = ("local", "mock")


class JobState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"
    CANCELLED = "cancelled"
    UNKNOWN = "unknown"


TERMINAL_STATES = frozenset({JobState.DONE, JobState.FAILED, JobState.CANCELLED})


@dataclass(frozen=True)
class QueuePolicy:
    """Site-imposed queue limits that shape submission batching."""

    max_queued_jobs: int | None = None
    max_wall_minutes: int | None = None
    max_nodes: int | None = None

    def __post_init__(self):
        for name in ("max_queued_jobs", "max_wall_minutes", "max_nodes"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValidationError(f"queue policy {name} must be positive, got {value}")


@dataclass(frozen=True)
class ResourceTarget:
    """A named place jobs can be sent to."""

    name: str
    kind: str
    host: str | None = None
    user: str | None = None
    remote_workdir: str | None = None
    policy: QueuePolicy | None = None
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(
                f"resource {self.name!r}: unknown kind {self.kind!r} (one of {', '.join(KINDS)})"
            )
        if self.kind in HOSTLESS_KINDS and self.host:
            raise ValidationError(f"resource {self.name!r}: kind {self.kind!r} must not set host")
        if self.kind not in HOSTLESS_KINDS and not self.host:
            raise ValidationError(f"resource {self.name!r}: kind {self.kind!r} requires host")


@dataclass(frozen=True)
class JobHandle:
    resource: str
    native_id: str
    experiment_id: str
    submitted_at: datetime


@dataclass(frozen=True)
class CommandResult:
    command: str
    returncode: int
    stdout: str
    stderr: str


class LocalRunner:
    """Runs command strings through the local shell."""

    def run(self, command: str) -> CommandResult:
        proc = subprocess.run(
            ["sh", "-c", command], capture_output=True, text=True, check=False
        )
        return CommandResult(command, proc.returncode, proc.stdout, proc.stderr)


class SshRunner:
    """Runs command strings on a remote host via the system ssh client.

    Authentication, agents, and jump hosts are the ssh configuration's
    business; nothing credential-like is handled here.
    """

    def __init__(self, host: str, user: str | None = None):
        self.host = host
        self.user = user

    @property
    def destination(self) -> str:
        return f"{self.user}@{self.host}" if self.user else self.host

    def run(self, command: str) -> CommandResult:
        argv = ["ssh", "-o", "BatchMode=yes", self.destination, command]
        proc = subprocess.run(argv, capture_output=True, text=True, check=False)
        if proc.returncode == 255:
            raise TransportError(
                f"ssh to {self.destination} failed: {proc.stderr.strip() or 'unreachable'}"
            )
        return CommandResult(command, proc.returncode, proc.stdout, proc.stderr)


def runner_for(target: ResourceTarget):
    """Pick the transport for a target; localhost short-circuits ssh."""
    if target.kind in HOSTLESS_KINDS or target.host in ("localhost", "127.0.0.1"):
        return LocalRunner()
    return SshRunner(target.host, target.user)


class SchedulerAdapter:
    """Base adapter: per-target serialization and queue-policy prechecks.

    Subclasses implement ``_submit``, ``_status``, and ``_cancel``. The
    adapter tracks the jobs it submitted so the max-queued-jobs policy can
    be enforced before a submission ever reaches the scheduler. Submits
    are never retried automatically; retrying is the caller's policy.
    """

    def __init__(self, target: ResourceTarget):
        self.target = target
        self._lock = threading.RLock()
        self._tracked: dict[str, JobState] = {}

    # -- public surface -------------------------------------------------

    def submit(self, script_path: str | Path, experiment_id: str, workdir: str | Path | None = None) -> JobHandle:
        with self._lock:
            self._check_queue_policy()
            handle = self._submit(Path(script_path), experiment_id, workdir)
            self._tracked[handle.native_id] = JobState.PENDING
            return handle

    def status(self, handle: JobHandle) -> JobState:
        with self._lock:
            cached = self._tracked.get(handle.native_id)
            if cached in TERMINAL_STATES:
                return cached  # terminal states never transition again
        state = self._status(handle)
        with self._lock:
            if handle.native_id in self._tracked:
                self._tracked[handle.native_id] = state
        return state

    def cancel(self, handle: JobHandle) -> JobState:
        with self._lock:
            current = self.status(handle)
            if current in TERMINAL_STATES:
                return current
            state = self._cancel(handle)
            self._tracked[handle.native_id] = state
            return state

    def read_text(self, path: str | Path) -> str | None:
        """Fetch a file's content from the target, or None if unreadable."""
        try:
            return Path(path).read_text(encoding="utf-8", errors="replace")
        except OSError:
            return None

    # -- hooks ------------------------------------------------------------

    def _submit(self, script_path: Path, experiment_id: str, workdir: Path | None) -> JobHandle:
        raise NotImplementedError

    def _status(self, handle: JobHandle) -> JobState:
        raise NotImplementedError

    def _cancel(self, handle: JobHandle) -> JobState:
        raise NotImplementedError

    # -- shared helpers ---------------------------------------------------

    def _check_queue_policy(self):
        policy = self.target.policy
        if policy is None or policy.max_queued_jobs is None:
            return
        live = sum(1 for state in self._tracked.values() if state not in TERMINAL_STATES)
        if live >= policy.max_queued_jobs:
            raise PolicyError(
                f"resource {self.target.name!r} already has {live} queued jobs; "
                f"policy max_queued_jobs={policy.max_queued_jobs}"
            )

    def _now(self) -> datetime:
        return datetime.now(timezone.utc).replace(microsecond=0)
