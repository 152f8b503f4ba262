"""Local-process and SSH adapters.

Neither transport has a queue, so completion is captured by a wrapper
script that records the exit status in ``<dir>/exit_code`` and appends
start/finish records to ``<dir>/status.log``. The job's own output lands
in ``<dir>/job.log``.
"""
from __future__ import annotations

import os
import signal
import subprocess
from pathlib import Path

from ..errors import SubmitError
from ..status import shell_helper
from .base import (
    JobHandle,
    JobState,
    ResourceTarget,
    SchedulerAdapter,
    SshRunner,
)

WRAPPER_NAME = ".cm_run.sh"
EXIT_FILE = "exit_code"


def build_wrapper(job_dir: str, script_path: str, resource: str, experiment_id: str) -> str:
    return f"""#!/bin/sh
{shell_helper()}
cd "{job_dir}" || exit 127
export CM_RESOURCE="{resource}"
export CM_NAME="{experiment_id}"
export CM_STATUS_FILE="{job_dir}/status.log"
cm_status running 0 "started"
sh "{script_path}" > "{job_dir}/job.log" 2>&1
_rc=$?
if [ "$_rc" -eq 0 ]; then
    cm_status done 100 "exit 0"
else
    cm_status failed 0 "exit $_rc"
fi
echo "$_rc" > "{job_dir}/{EXIT_FILE}"
exit "$_rc"
"""


def _state_from_exit_code(text: str) -> JobState:
    try:
        return JobState.DONE if int(text.strip()) == 0 else JobState.FAILED
    except ValueError:
        return JobState.UNKNOWN


class LocalShellAdapter(SchedulerAdapter):
    """Runs jobs as detached local processes; native id is the pid."""

    def __init__(self, target: ResourceTarget):
        super().__init__(target)
        self._cancelled: set[str] = set()
        self._dirs: dict[str, Path] = {}

    def _submit(self, script_path: Path, experiment_id: str, workdir: Path | None) -> JobHandle:
        if not script_path.is_file():
            raise SubmitError(f"script {script_path} does not exist")
        job_dir = Path(workdir) if workdir else script_path.parent
        job_dir.mkdir(parents=True, exist_ok=True)
        wrapper = job_dir / WRAPPER_NAME
        wrapper.write_text(
            build_wrapper(str(job_dir), str(script_path.resolve()), self.target.name, experiment_id),
            encoding="utf-8",
        )
        os.chmod(wrapper, 0o755)
        (job_dir / EXIT_FILE).unlink(missing_ok=True)
        proc = subprocess.Popen(
            ["sh", str(wrapper)],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
            start_new_session=True,
        )
        native_id = str(proc.pid)
        self._dirs[native_id] = job_dir
        return JobHandle(
            resource=self.target.name,
            native_id=native_id,
            experiment_id=experiment_id,
            submitted_at=self._now(),
        )

    def job_dir(self, handle: JobHandle) -> Path | None:
        return self._dirs.get(handle.native_id)

    def attach_job(self, native_id: str, job_dir: str | Path):
        """Re-associate a persisted handle with its directory (fresh process)."""
        self._dirs[native_id] = Path(job_dir)

    def _exit_state(self, handle: JobHandle) -> JobState | None:
        job_dir = self._dirs.get(handle.native_id)
        if job_dir is None:
            return None
        exit_file = job_dir / EXIT_FILE
        if exit_file.is_file():
            return _state_from_exit_code(exit_file.read_text(encoding="utf-8"))
        return None

    @staticmethod
    def _alive(pid: int) -> bool:
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return False
        except PermissionError:
            return True
        # reap a finished child so it does not linger as a zombie
        try:
            finished, _ = os.waitpid(pid, os.WNOHANG)
            if finished == pid:
                return False
        except ChildProcessError:
            pass
        return True

    def _status(self, handle: JobHandle) -> JobState:
        state = self._exit_state(handle)
        if state is not None:
            return state
        if self._alive(int(handle.native_id)):
            return JobState.RUNNING
        # the process is gone: give the wrapper's final write a second look
        state = self._exit_state(handle)
        if state is not None:
            return state
        if handle.native_id in self._cancelled:
            return JobState.CANCELLED
        return JobState.UNKNOWN

    def _cancel(self, handle: JobHandle) -> JobState:
        pid = int(handle.native_id)
        self._cancelled.add(handle.native_id)
        try:
            os.killpg(os.getpgid(pid), signal.SIGTERM)
        except (ProcessLookupError, PermissionError):
            pass
        return JobState.CANCELLED


class SshAdapter(SchedulerAdapter):
    """Runs jobs on a remote host through the system ssh client.

    The remote working directory is ``<remote_workdir>/<experiment_id>``;
    script and wrapper are pushed there before launch.
    """

    def __init__(self, target: ResourceTarget, runner=None):
        super().__init__(target)
        self.runner = runner if runner is not None else SshRunner(target.host, target.user)
        self._cancelled: set[str] = set()
        self._remote_dirs: dict[str, str] = {}

    def _remote_dir(self, experiment_id: str) -> str:
        base = self.target.remote_workdir or "~/benchkit"
        return f"{base}/{experiment_id}"

    def _submit(self, script_path: Path, experiment_id: str, workdir: Path | None) -> JobHandle:
        remote_dir = self._remote_dir(experiment_id)
        script_text = script_path.read_text(encoding="utf-8")
        wrapper_text = build_wrapper(
            remote_dir, f"{remote_dir}/job.sh", self.target.name, experiment_id
        )
        setup = (
            f"mkdir -p {remote_dir} && "
            f"cat > {remote_dir}/job.sh << 'CM_EOF'\n{script_text}\nCM_EOF\n"
            f"cat > {remote_dir}/{WRAPPER_NAME} << 'CM_EOF'\n{wrapper_text}\nCM_EOF"
        )
        result = self.runner.run(setup)
        if result.returncode != 0:
            raise SubmitError(
                f"failed to stage job on {self.target.name}: {result.stderr.strip()}"
            )
        launch = self.runner.run(
            f"cd {remote_dir} && nohup sh {WRAPPER_NAME} > /dev/null 2>&1 & echo $!"
        )
        if launch.returncode != 0 or not launch.stdout.strip():
            raise SubmitError(
                f"failed to launch job on {self.target.name}: {launch.stderr.strip()}"
            )
        native_id = launch.stdout.strip().splitlines()[-1]
        self._remote_dirs[native_id] = remote_dir
        return JobHandle(
            resource=self.target.name,
            native_id=native_id,
            experiment_id=experiment_id,
            submitted_at=self._now(),
        )

    def _status(self, handle: JobHandle) -> JobState:
        remote_dir = self._remote_dirs.get(handle.native_id, self._remote_dir(handle.experiment_id))
        probe = (
            f"if [ -f {remote_dir}/{EXIT_FILE} ]; then cat {remote_dir}/{EXIT_FILE}; "
            f"elif kill -0 {handle.native_id} 2>/dev/null; then echo __running__; "
            f"else echo __gone__; fi"
        )
        result = self.runner.run(probe)
        if result.returncode != 0:
            return JobState.UNKNOWN
        token = result.stdout.strip()
        if token == "__running__":
            return JobState.RUNNING
        if token == "__gone__":
            if handle.native_id in self._cancelled:
                return JobState.CANCELLED
            return JobState.UNKNOWN
        return _state_from_exit_code(token)

    def _cancel(self, handle: JobHandle) -> JobState:
        self._cancelled.add(handle.native_id)
        pid = handle.native_id
        self.runner.run(f"kill -TERM -- -{pid} 2>/dev/null || kill -TERM {pid}")
        return JobState.CANCELLED

    def read_text(self, path: str | Path) -> str | None:
        result = self.runner.run(f"cat {path}")
        if result.returncode != 0:
            return None
        return result.stdout
