"""Append-only status-file protocol for job progress reporting.

Jobs report progress by appending marker lines to a status file (or plain
stdout); the client pulls the file and keeps the newest record. The
marker starts with ``# `` so the same line can sit inside a shell script
or an application log without bothering anything else reading it.

Line grammar::

    # cmstatus ts=<iso-utc> resource=<r> name=<n> status=<s> progress=<p> msg="<m>"

Files are append-only with a single writer; readers discard a final line
that has no trailing newline (it may still be mid-write).
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import ValidationError

logger = logging.getLogger(__name__)

MARKER = "# cmstatus "

STATES = ("ready", "submitted", "pending", "running", "done", "failed", "cancelled")

_TOKEN_RE = re.compile(r"[A-Za-z0-9._:@-]+")
_LINE_RE = re.compile(
    r"# cmstatus ts=(?P<ts>\S+) resource=(?P<resource>\S+) name=(?P<name>\S+) "
    r"status=(?P<state>\S+) progress=(?P<progress>\d+) "
    r'msg="(?P<msg>(?:[^"\\]|\\.)*)"\s*'
)


def utc_now_seconds() -> datetime:
    """Current UTC time truncated to whole seconds (the wire resolution)."""
    return datetime.now(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class StatusRecord:
    """One timestamped progress report from a running job or node."""

    timestamp: datetime
    resource: str
    name: str
    state: str
    progress: int
    message: str = ""


def emit(record: StatusRecord) -> str:
    """Serialize a record as a single newline-terminated marker line."""
    if record.state not in STATES:
        raise ValidationError(f"unknown status state {record.state!r}")
    if not 0 <= record.progress <= 100:
        raise ValidationError(f"progress must be in [0, 100], got {record.progress}")
    for label, value in (("resource", record.resource), ("name", record.name)):
        if not _TOKEN_RE.fullmatch(value or ""):
            raise ValidationError(f"{label} {value!r} is not a bare token")
    if "\n" in record.message:
        raise ValidationError("status message must not contain newlines")
    msg = record.message.replace("\\", "\\\\").replace('"', '\\"')
    return (
        f"# cmstatus ts={format_timestamp(record.timestamp)} "
        f"resource={record.resource} name={record.name} "
        f'status={record.state} progress={record.progress} msg="{msg}"\n'
    )


def _parse_line(line: str) -> StatusRecord | None:
    match = _LINE_RE.fullmatch(line)
    if match is None:
        return None
    state = match.group("state")
    if state not in STATES:
        return None
    progress = int(match.group("progress"))
    if progress > 100:
        return None
    try:
        ts = parse_timestamp(match.group("ts"))
    except ValueError:
        return None
    msg = match.group("msg").replace('\\"', '"').replace("\\\\", "\\")
    return StatusRecord(
        timestamp=ts,
        resource=match.group("resource"),
        name=match.group("name"),
        state=state,
        progress=progress,
        message=msg,
    )


def parse_records(text: str) -> list[StatusRecord]:
    """Extract every status record from a stream, in file order.

    Non-matching lines (arbitrary job output) are ignored; a line that
    starts like a marker but fails to parse is skipped with a warning. A
    torn final line (no trailing newline) is discarded.
    """
    lines = text.split("\n")
    if lines and lines[-1] != "":
        lines = lines[:-1]  # torn final line
    records: list[StatusRecord] = []
    for line in lines:
        if not line.startswith(MARKER.rstrip()):
            continue
        record = _parse_line(line)
        if record is None:
            logger.warning("skipping malformed status line: %r", line)
            continue
        records.append(record)
    return records


def parse_latest(text: str) -> StatusRecord | None:
    """Return the record with the greatest timestamp (ties: last in file order)."""
    records = parse_records(text)
    if not records:
        return None
    best_index = max(range(len(records)), key=lambda i: (records[i].timestamp, i))
    return records[best_index]


def read_latest(path: str | Path) -> StatusRecord | None:
    path = Path(path)
    try:
        return parse_latest(path.read_text(encoding="utf-8", errors="replace"))
    except OSError:
        return None


def append(path: str | Path, record: StatusRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(emit(record))


def shell_helper() -> str:
    """POSIX shell function for emitting status lines from batch scripts.

    Usage after sourcing: ``cm_status <state> <progress> [message...]``.
    Output goes to ``$CM_STATUS_FILE`` when set, else stdout; resource and
    job name come from ``$CM_RESOURCE`` / ``$CM_NAME``.
    """
    return """\
# Status reporting helper. Source this file, then call:
#   cm_status <state> <progress> [message...]
cm_status() {
    _cms_state="$1"
    _cms_progress="$2"
    _cms_msg=""
    if [ "$#" -gt 2 ]; then
        _cms_msg=$(shift 2; printf '%s' "$*" | tr -d '\\n' | sed 's/\\\\/\\\\\\\\/g; s/"/\\\\"/g')
    fi
    _cms_line=$(printf '# cmstatus ts=%s resource=%s name=%s status=%s progress=%s msg="%s"' \\
        "$(date -u +%Y-%m-%dT%H:%M:%SZ)" \\
        "${CM_RESOURCE:-local}" "${CM_NAME:-job}" \\
        "$_cms_state" "$_cms_progress" "$_cms_msg")
    if [ -n "${CM_STATUS_FILE:-}" ]; then
        printf '%s\\n' "$_cms_line" >> "$CM_STATUS_FILE"
    else
        printf '%s\\n' "$_cms_line"
    fi
}
"""
