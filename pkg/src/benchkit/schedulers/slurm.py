"""SLURM adapter: sbatch/squeue/sacct/scancel over a command runner."""
from __future__ import annotations

import re
from pathlib import Path

from ..errors import SubmitError
from .base import JobHandle, JobState, ResourceTarget, SchedulerAdapter, runner_for

_SUBMITTED_RE = re.compile(r"Submitted batch job (\d+)")

#: Native state -> JobState. Unlisted states map to unknown, never an error.
STATE_MAP = {
    "PENDING": JobState.PENDING,
    "CONFIGURING": JobState.PENDING,
    "REQUEUED": JobState.PENDING,
    "SUSPENDED": JobState.PENDING,
    "RESV_DEL_HOLD": JobState.PENDING,
    "RUNNING": JobState.RUNNING,
    "COMPLETING": JobState.RUNNING,
    "STAGE_OUT": JobState.RUNNING,
    "COMPLETED": JobState.DONE,
    "FAILED": JobState.FAILED,
    "TIMEOUT": JobState.FAILED,
    "OUT_OF_MEMORY": JobState.FAILED,
    "NODE_FAIL": JobState.FAILED,
    "BOOT_FAIL": JobState.FAILED,
    "DEADLINE": JobState.FAILED,
    "PREEMPTED": JobState.FAILED,
    "CANCELLED": JobState.CANCELLED,
}


def map_native_state(raw: str) -> JobState:
    token = raw.strip().split()[0] if raw.strip() else ""
    return STATE_MAP.get(token.rstrip("+").upper(), JobState.UNKNOWN)


def parse_submit_output(stdout: str) -> str | None:
    match = _SUBMITTED_RE.search(stdout)
    return match.group(1) if match else None


class SlurmAdapter(SchedulerAdapter):
    def __init__(self, target: ResourceTarget, runner=None):
        super().__init__(target)
        self.runner = runner if runner is not None else runner_for(target)

    def _submit(self, script_path: Path, experiment_id: str, workdir: Path | None) -> JobHandle:
        result = self.runner.run(f"sbatch {script_path}")
        if result.returncode != 0:
            raise SubmitError(
                f"sbatch failed on {self.target.name} (exit {result.returncode}): "
                f"{result.stderr.strip()}"
            )
        native_id = parse_submit_output(result.stdout)
        if native_id is None:
            raise SubmitError(
                f"could not find a job id in sbatch output: {result.stdout.strip()!r}"
            )
        return JobHandle(
            resource=self.target.name,
            native_id=native_id,
            experiment_id=experiment_id,
            submitted_at=self._now(),
        )

    def _status(self, handle: JobHandle) -> JobState:
        queued = self.runner.run(f"squeue -j {handle.native_id} -h -o %T")
        if queued.returncode == 0 and queued.stdout.strip():
            return map_native_state(queued.stdout)
        # job left the queue; ask accounting
        finished = self.runner.run(f"sacct -j {handle.native_id} -n -o State")
        if finished.returncode != 0 or not finished.stdout.strip():
            return JobState.UNKNOWN
        return map_native_state(finished.stdout.splitlines()[0])

    def _cancel(self, handle: JobHandle) -> JobState:
        self.runner.run(f"scancel {handle.native_id}")
        return JobState.CANCELLED
