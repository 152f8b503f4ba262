"""Named stopwatch timers with environment capture and multi-format reports.

Instrumenting code is two calls::

    from benchkit.timers import StopWatch
    watch = StopWatch()
    watch.start("epoch")
    ...
    watch.stop("epoch")
    print(watch.report("txt"))

Re-starting a stopped timer begins a new event instance; the report
aggregates count/total/mean/min/max per name. Reports come in txt, csv,
json, yaml, and html, each embedding a snapshot of the host system, and
events can additionally be exported as MLCommons-style ``:::MLLOG`` lines.
"""
from __future__ import annotations

import csv
import html as html_lib
import io
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable

import yaml

from .errors import TimerError, ValidationError
from .sysinfo import SystemInfo, capture_system_info

REPORT_FORMATS = ("txt", "csv", "json", "yaml", "html")

MLLOG_PREFIX = ":::MLLOG "

_SUMMARY_COLUMNS = ("name", "count", "total_s", "mean_s", "min_s", "max_s", "first_start", "last_stop")


@dataclass
class TimerEvent:
    """One start/stop interval of a named timer."""

    name: str
    start: datetime
    stop: datetime | None = None
    status: str | None = None
    context: dict[str, Any] = field(default_factory=dict)

    @property
    def elapsed(self) -> float | None:
        if self.stop is None:
            return None
        return (self.stop - self.start).total_seconds()

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "start": _iso(self.start),
            "stop": _iso(self.stop) if self.stop else None,
            "elapsed_s": self.elapsed,
            "status": self.status,
            "context": dict(self.context),
        }


def _iso(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class TimerStats:
    name: str
    count: int
    total: float
    mean: float
    min: float
    max: float
    first_start: datetime
    last_stop: datetime

    def row(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "count": self.count,
            "total_s": round(self.total, 3),
            "mean_s": round(self.mean, 3),
            "min_s": round(self.min, 3),
            "max_s": round(self.max, 3),
            "first_start": _iso(self.first_start),
            "last_stop": _iso(self.last_stop),
        }


class StopWatch:
    """Registry of named timers; safe for concurrent start/stop."""

    def __init__(self, clock: Callable[[], datetime] | None = None):
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._lock = threading.Lock()
        self._events: list[TimerEvent] = []
        self._open: dict[str, TimerEvent] = {}

    def start(self, name: str, **context: Any) -> TimerEvent:
        if not name:
            raise TimerError("timer name must be non-empty")
        with self._lock:
            if name in self._open:
                raise TimerError(f"timer {name!r} is already running")
            event = TimerEvent(name=name, start=self._clock(), context=context)
            self._open[name] = event
            self._events.append(event)
            return event

    def stop(self, name: str, status: str | None = None) -> TimerEvent:
        with self._lock:
            event = self._open.pop(name, None)
            if event is None:
                raise TimerError(f"timer {name!r} was stopped but never started")
            event.stop = self._clock()
            if status is not None:
                event.status = status
            return event

    def events(self, closed_only: bool = False) -> list[TimerEvent]:
        with self._lock:
            events = list(self._events)
        if closed_only:
            events = [e for e in events if e.stop is not None]
        return events

    def summary(self) -> list[TimerStats]:
        """Per-name aggregate over all closed event instances."""
        stats: dict[str, TimerStats] = {}
        order: list[str] = []
        grouped: dict[str, list[TimerEvent]] = {}
        for event in self.events(closed_only=True):
            grouped.setdefault(event.name, []).append(event)
            if event.name not in order:
                order.append(event.name)
        for name in order:
            events = grouped[name]
            elapsed = [e.elapsed for e in events]
            stats[name] = TimerStats(
                name=name,
                count=len(events),
                total=sum(elapsed),
                mean=sum(elapsed) / len(elapsed),
                min=min(elapsed),
                max=max(elapsed),
                first_start=min(e.start for e in events),
                last_stop=max(e.stop for e in events),
            )
        return [stats[name] for name in order]

    # -- reports ------------------------------------------------------------

    def report(self, format: str = "txt", system: SystemInfo | None = None) -> str:
        if format not in REPORT_FORMATS:
            raise ValidationError(
                f"unknown report format {format!r} (one of {', '.join(REPORT_FORMATS)})"
            )
        system = system or capture_system_info()
        rows = [stats.row() for stats in self.summary()]
        if format == "txt":
            return self._report_txt(rows, system)
        if format == "csv":
            return self._report_csv(rows, system)
        if format == "html":
            return self._report_html(rows, system)
        payload = {
            "system": system.to_dict(),
            "timers": rows,
            "events": [event.to_dict() for event in self.events()],
        }
        if format == "json":
            return json.dumps(payload, indent=2) + "\n"
        return yaml.safe_dump(payload, sort_keys=False)

    @staticmethod
    def _format_cell(value: Any) -> str:
        if isinstance(value, float):
            return f"{value:.3f}"
        return str(value)

    def _report_txt(self, rows: list[dict], system: SystemInfo) -> str:
        lines = ["# system"]
        for key, value in system.to_dict().items():
            lines.append(f"#   {key}: {value}")
        header = list(_SUMMARY_COLUMNS)
        str_rows = [[self._format_cell(row[col]) for col in header] for row in rows]
        widths = [
            max(len(header[i]), *(len(r[i]) for r in str_rows)) if str_rows else len(header[i])
            for i in range(len(header))
        ]
        def fmt(cells):
            return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
        lines.append(fmt(header))
        lines.append(fmt(["-" * w for w in widths]))
        lines.extend(fmt(r) for r in str_rows)
        return "\n".join(lines) + "\n"

    def _report_csv(self, rows: list[dict], system: SystemInfo) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\r\n")
        writer.writerow(_SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([self._format_cell(row[col]) for col in _SUMMARY_COLUMNS])
        writer.writerow([])
        writer.writerow(["field", "value"])
        for key, value in system.to_dict().items():
            writer.writerow([key, value])
        return buffer.getvalue()

    def _report_html(self, rows: list[dict], system: SystemInfo) -> str:
        timer_rows = "\n".join(
            "      <tr>"
            + "".join(f"<td>{html_lib.escape(self._format_cell(row[col]))}</td>" for col in _SUMMARY_COLUMNS)
            + "</tr>"
            for row in rows
        )
        system_rows = "\n".join(
            f"      <tr><td>{html_lib.escape(str(k))}</td><td>{html_lib.escape(str(v))}</td></tr>"
            for k, v in system.to_dict().items()
        )
        header_cells = "".join(f"<th>{col}</th>" for col in _SUMMARY_COLUMNS)
        return f"""<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>timer report</title>
<style>table {{ border-collapse: collapse; margin-bottom: 1em; }}
td, th {{ border: 1px solid #999; padding: 0.3em 0.8em; }}</style>
</head>
<body>
  <h1>Timers</h1>
  <table>
    <thead><tr>{header_cells}</tr></thead>
    <tbody>
{timer_rows}
    </tbody>
  </table>
  <h1>System</h1>
  <table>
    <tbody>
{system_rows}
    </tbody>
  </table>
</body>
</html>
"""

    # -- mllog ----------------------------------------------------------------

    def mllog_export(self, run_context: dict[str, Any] | None = None) -> list[str]:
        """Event boundaries as ``:::MLLOG <json>`` lines, time-ordered.

        Each closed event contributes an INTERVAL_START and an
        INTERVAL_END line; the END line's value is the elapsed seconds.
        Lines are ordered by time_ms, non-decreasing.
        """
        context = dict(run_context or {})
        namespace = context.pop("namespace", "benchkit")
        entries: list[tuple[int, int, dict]] = []
        seq = 0
        for event in self.events(closed_only=True):
            start_ms = int(event.start.timestamp() * 1000)
            stop_ms = int(event.stop.timestamp() * 1000)
            metadata = {**context, **event.context}
            if event.status is not None:
                metadata["status"] = event.status
            entries.append(
                (start_ms, seq, {
                    "namespace": namespace,
                    "time_ms": start_ms,
                    "event_type": "INTERVAL_START",
                    "key": event.name,
                    "value": None,
                    "metadata": metadata,
                })
            )
            seq += 1
            entries.append(
                (stop_ms, seq, {
                    "namespace": namespace,
                    "time_ms": stop_ms,
                    "event_type": "INTERVAL_END",
                    "key": event.name,
                    "value": event.elapsed,
                    "metadata": metadata,
                })
            )
            seq += 1
        entries.sort(key=lambda item: (item[0], item[1]))
        return [MLLOG_PREFIX + json.dumps(payload, sort_keys=True) for _, _, payload in entries]


#: Default registry for quick instrumentation.
stopwatch = StopWatch()
