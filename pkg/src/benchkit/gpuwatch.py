"""Periodic GPU sampling into timestamped CSV rows.

The sampler is any command printing ``util, mem, power, temp`` as one CSV
line (the default queries nvidia-smi); swapping in a fixture script makes
the watcher fully testable without hardware. Dense mode drops rows whose
values match the previously emitted row, which collapses idle stretches.
"""
from __future__ import annotations

import shlex
import shutil
import subprocess
import time
from datetime import datetime, timezone
from typing import Callable, Iterator

from .errors import ValidationError

DEFAULT_SAMPLER = (
    "nvidia-smi --query-gpu=utilization.gpu,memory.used,power.draw,temperature.gpu "
    "--format=csv,noheader,nounits -i {gpu}"
)

CSV_HEADER = "ts,gpu,util_pct,mem_used,power_w,temp_c"

UNKNOWN_VALUES = ("unknown", "unknown", "unknown", "unknown")


def _sample(command: str) -> tuple[str, str, str, str]:
    try:
        proc = subprocess.run(
            ["sh", "-c", command], capture_output=True, text=True, timeout=30, check=False
        )
    except (OSError, subprocess.TimeoutExpired):
        return UNKNOWN_VALUES
    if proc.returncode != 0:
        return UNKNOWN_VALUES
    fields = [part.strip() for part in proc.stdout.strip().splitlines()[-1].split(",")] if proc.stdout.strip() else []
    if len(fields) != 4:
        return UNKNOWN_VALUES
    return tuple(fields)  # type: ignore[return-value]


def watch(
    sampler_command: str | None = None,
    gpu_index: int = 0,
    delay_seconds: float = 0.5,
    dense: bool = False,
    duration_seconds: float | None = None,
    clock: Callable[[], float] | None = None,
    sleep: Callable[[float], None] | None = None,
) -> Iterator[str]:
    """Yield a CSV header then one sample row per period until stopped.

    Stops after ``duration_seconds`` when given, otherwise runs until the
    consumer stops iterating (e.g. on SIGINT). A sampler failure mid-run
    yields a row of "unknown" values and the stream continues.
    """
    if delay_seconds <= 0:
        raise ValidationError("delay must be positive")
    command = (sampler_command or DEFAULT_SAMPLER).format(gpu=gpu_index)
    executable = shlex.split(command)[0] if command.strip() else ""
    if not executable or shutil.which(executable) is None:
        raise ValidationError(f"sampler executable {executable!r} not found")
    clock = clock or time.monotonic
    sleep = sleep or time.sleep

    yield CSV_HEADER
    started = clock()
    last_values: tuple[str, str, str, str] | None = None
    while True:
        now = clock()
        if duration_seconds is not None and now - started >= duration_seconds:
            return
        values = _sample(command)
        if not dense or values != last_values:
            ts = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"
            yield ",".join((ts, str(gpu_index)) + values)
            last_values = values
        sleep(delay_seconds)
