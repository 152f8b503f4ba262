"""Host environment snapshot embedded in reports and result records."""
from __future__ import annotations

import getpass
import os
import platform
import socket
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Any, Callable

import psutil

from . import __version__

UNKNOWN = "unknown"


@dataclass(frozen=True)
class SystemInfo:
    os_name: str
    os_version: str
    hostname: str
    user: str
    cpu_model: str
    cpu_count: int | str
    total_mem_bytes: int | str
    tool_version: str
    captured_at: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemInfo":
        fields = {name: data.get(name, UNKNOWN) for name in cls.__dataclass_fields__}
        return cls(**fields)


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as handle:
            for line in handle:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or UNKNOWN


def capture_system_info(clock: Callable[[], datetime] | None = None) -> SystemInfo:
    """Detect the local OS, host, and hardware parameters.

    Every field is populated; anything undetectable becomes "unknown".
    """
    now = (clock or (lambda: datetime.now(timezone.utc)))()
    try:
        user = getpass.getuser()
    except (KeyError, OSError):
        user = os.environ.get("USER", UNKNOWN)
    try:
        total_mem: int | str = psutil.virtual_memory().total
    except Exception:
        total_mem = UNKNOWN
    return SystemInfo(
        os_name=platform.system() or UNKNOWN,
        os_version=platform.release() or UNKNOWN,
        hostname=socket.gethostname() or UNKNOWN,
        user=user or UNKNOWN,
        cpu_model=_cpu_model(),
        cpu_count=os.cpu_count() or UNKNOWN,
        total_mem_bytes=total_mem,
        tool_version=__version__,
        captured_at=now.strftime("%Y-%m-%dT%H:%M:%SZ"),
    )
