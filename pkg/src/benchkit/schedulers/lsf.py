"""LSF adapter: bsub/bjobs/bkill over a command runner."""
from __future__ import annotations

import re
from pathlib import Path

from ..errors import SubmitError
from .base import JobHandle, JobState, ResourceTarget, SchedulerAdapter, runner_for

_SUBMITTED_RE = re.compile(r"Job <(\d+)>")

STATE_MAP = {
    "PEND": JobState.PENDING,
    "PSUSP": JobState.PENDING,
    "USUSP": JobState.PENDING,
    "SSUSP": JobState.PENDING,
    "WAIT": JobState.PENDING,
    "RUN": JobState.RUNNING,
    "DONE": JobState.DONE,
    "EXIT": JobState.FAILED,
}


def parse_submit_output(stdout: str) -> str | None:
    match = _SUBMITTED_RE.search(stdout)
    return match.group(1) if match else None


def parse_bjobs_state(stdout: str) -> JobState:
    fields = stdout.split()
    # `bjobs -noheader` rows read JOBID USER STAT QUEUE ...
    if len(fields) < 3:
        return JobState.UNKNOWN
    return STATE_MAP.get(fields[2].upper(), JobState.UNKNOWN)


class LsfAdapter(SchedulerAdapter):
    def __init__(self, target: ResourceTarget, runner=None):
        super().__init__(target)
        self.runner = runner if runner is not None else runner_for(target)

    def _submit(self, script_path: Path, experiment_id: str, workdir: Path | None) -> JobHandle:
        result = self.runner.run(f"bsub < {script_path}")
        if result.returncode != 0:
            raise SubmitError(
                f"bsub failed on {self.target.name} (exit {result.returncode}): "
                f"{result.stderr.strip()}"
            )
        native_id = parse_submit_output(result.stdout)
        if native_id is None:
            raise SubmitError(f"could not find a job id in bsub output: {result.stdout.strip()!r}")
        return JobHandle(
            resource=self.target.name,
            native_id=native_id,
            experiment_id=experiment_id,
            submitted_at=self._now(),
        )

    def _status(self, handle: JobHandle) -> JobState:
        result = self.runner.run(f"bjobs -noheader {handle.native_id}")
        if result.returncode != 0 or not result.stdout.strip():
            return JobState.UNKNOWN
        return parse_bjobs_state(result.stdout)

    def _cancel(self, handle: JobHandle) -> JobState:
        self.runner.run(f"bkill {handle.native_id}")
        return JobState.CANCELLED
