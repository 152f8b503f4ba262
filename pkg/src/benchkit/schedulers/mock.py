"""Deterministic in-process scheduler for desk-scale tests.

The mock keeps a FIFO queue with a fixed number of run slots and a tick
clock that only moves through ``advance``. Within one tick: pending jobs
fill free slots, every running job progresses by one tick, and finished
jobs release their slot at the tick's end. One tick stands for one minute
when a queue policy's wall cap is applied, so a job longer than the cap
deterministically ends as ``failed`` with reason "timeout".
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from ..errors import ValidationError
from ..status import StatusRecord, append
from .base import TERMINAL_STATES, JobHandle, JobState, ResourceTarget, SchedulerAdapter

EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)


@dataclass
class _MockJob:
    native_id: str
    experiment_id: str
    duration: int
    submitted_tick: int
    status_path: str | None = None
    state: str = JobState.PENDING.value
    elapsed: int = 0
    started_tick: int | None = None
    finished_tick: int | None = None
    reason: str | None = None
    fail: bool = False
    progress: int = 0


class MockScheduler(SchedulerAdapter):
    """Simulated queue. ``advance(ticks)`` is the only source of time."""

    def __init__(
        self,
        target: ResourceTarget,
        width: int | None = None,
        default_ticks: int | None = None,
        state_path: str | Path | None = None,
    ):
        super().__init__(target)
        options = target.options or {}
        self.width = int(width if width is not None else options.get("width", 1))
        self.default_ticks = int(
            default_ticks if default_ticks is not None else options.get("default_ticks", 1)
        )
        if self.width < 1 or self.default_ticks < 1:
            raise ValidationError("mock width and default_ticks must be >= 1")
        self.tick = 0
        self._jobs: dict[str, _MockJob] = {}
        self._queue: list[str] = []  # pending, FIFO
        self._running: list[str] = []
        self._counter = 0
        self._ticks_by_experiment: dict[str, int] = {
            str(k): int(v) for k, v in (options.get("ticks") or {}).items()
        }
        self._fail_experiments = set(options.get("fail") or ())
        self._state_path = Path(state_path) if state_path else None
        if self._state_path and self._state_path.is_file():
            self._load_state()

    # -- configuration hooks for tests and the coordinator ---------------

    def set_job_profile(self, experiment_id: str, ticks: int | None = None, fail: bool = False):
        """Declare how long a future job runs and whether it ends in failure."""
        if ticks is not None:
            self._ticks_by_experiment[experiment_id] = int(ticks)
        if fail:
            self._fail_experiments.add(experiment_id)

    # -- adapter hooks -----------------------------------------------------

    def _submit(self, script_path: Path, experiment_id: str, workdir: Path | None) -> JobHandle:
        self._counter += 1
        native_id = f"m-{self._counter}"
        job_dir = Path(workdir) if workdir else script_path.parent
        job = _MockJob(
            native_id=native_id,
            experiment_id=experiment_id,
            duration=self._ticks_by_experiment.get(experiment_id, self.default_ticks),
            submitted_tick=self.tick,
            status_path=str(job_dir / "status.log") if job_dir else None,
            fail=experiment_id in self._fail_experiments,
        )
        self._jobs[native_id] = job
        self._queue.append(native_id)
        self._record(job, JobState.PENDING.value, 0, "queued")
        self._save_state()
        return JobHandle(
            resource=self.target.name,
            native_id=native_id,
            experiment_id=experiment_id,
            submitted_at=self._timestamp(),
        )

    def _status(self, handle: JobHandle) -> JobState:
        job = self._jobs.get(handle.native_id)
        if job is None:
            return JobState.UNKNOWN
        return JobState(job.state)

    def _cancel(self, handle: JobHandle) -> JobState:
        job = self._jobs.get(handle.native_id)
        if job is None:
            return JobState.UNKNOWN
        if job.state in (s.value for s in TERMINAL_STATES):
            return JobState(job.state)
        if job.native_id in self._queue:
            self._queue.remove(job.native_id)
        if job.native_id in self._running:
            self._running.remove(job.native_id)
        job.state = JobState.CANCELLED.value
        job.finished_tick = self.tick
        self._record(job, job.state, job.progress, "cancelled")
        self._save_state()
        return JobState.CANCELLED

    # -- simulation ---------------------------------------------------------

    def advance(self, ticks: int = 1) -> None:
        """Move the simulated clock forward."""
        with self._lock:
            for _ in range(ticks):
                self._step()
            self._save_state()

    def _step(self):
        self.tick += 1
        # fill free slots in submission order
        while self._queue and len(self._running) < self.width:
            native_id = self._queue.pop(0)
            job = self._jobs[native_id]
            job.state = JobState.RUNNING.value
            job.started_tick = self.tick
            self._running.append(native_id)
            self._record(job, job.state, 0, "started")
        # progress and complete
        cap = None
        if self.target.policy is not None:
            cap = self.target.policy.max_wall_minutes  # one tick == one minute
        still_running = []
        for native_id in self._running:
            job = self._jobs[native_id]
            job.elapsed += 1
            job.progress = min(100, int(100 * job.elapsed / job.duration))
            if job.elapsed >= job.duration:
                job.finished_tick = self.tick
                if job.fail:
                    job.state = JobState.FAILED.value
                    job.reason = "simulated failure"
                    self._record(job, job.state, job.progress, job.reason)
                else:
                    job.state = JobState.DONE.value
                    self._record(job, job.state, 100, "")
                self._tracked[native_id] = JobState(job.state)
            elif cap is not None and job.elapsed >= cap:
                job.finished_tick = self.tick
                job.state = JobState.FAILED.value
                job.reason = "timeout"
                self._record(job, job.state, job.progress, job.reason)
                self._tracked[native_id] = JobState.FAILED
            else:
                still_running.append(native_id)
        self._running = still_running

    # -- introspection ------------------------------------------------------

    def job_info(self, handle: JobHandle) -> dict:
        job = self._jobs.get(handle.native_id)
        if job is None:
            return {}
        return asdict(job)

    def live_jobs(self) -> int:
        return len(self._queue) + len(self._running)

    def now(self) -> datetime:
        """The simulated clock as a timestamp (one tick per minute)."""
        return self._timestamp()

    def _timestamp(self) -> datetime:
        return EPOCH + timedelta(minutes=self.tick)

    def _record(self, job: _MockJob, state: str, progress: int, message: str):
        if not job.status_path:
            return
        append(
            job.status_path,
            StatusRecord(
                timestamp=self._timestamp(),
                resource=self.target.name,
                name=job.experiment_id,
                state=state,
                progress=progress,
                message=message,
            ),
        )

    # -- optional on-disk state, so separate CLI invocations share a queue --

    def _save_state(self):
        if not self._state_path:
            return
        state = {
            "tick": self.tick,
            "counter": self._counter,
            "queue": self._queue,
            "running": self._running,
            "jobs": {nid: asdict(job) for nid, job in self._jobs.items()},
        }
        self._state_path.parent.mkdir(parents=True, exist_ok=True)
        self._state_path.write_text(json.dumps(state, indent=1), encoding="utf-8")

    def _load_state(self):
        state = json.loads(self._state_path.read_text(encoding="utf-8"))
        self.tick = state["tick"]
        self._counter = state["counter"]
        self._queue = list(state["queue"])
        self._running = list(state["running"])
        self._jobs = {nid: _MockJob(**job) for nid, job in state["jobs"].items()}
        for nid, job in self._jobs.items():
            self._tracked[nid] = JobState(job.state)
