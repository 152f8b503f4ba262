"""Render a workflow run as a table, Graphviz digraph, HTML page, or log."""
from __future__ import annotations

import html as html_lib
from datetime import datetime, timezone
from typing import Any

from .coordinator import RunLedger
from .errors import ValidationError
from .status import emit, format_timestamp
from .templates import scan
from .workflow import WorkflowGraph, WorkflowNode

VIEW_FORMATS = ("table", "dot", "html", "log")


def render_node_label(
    node: WorkflowNode,
    status: str | None = None,
    progress: int | None = None,
    clock=None,
) -> str:
    """Substitute node-scope variables into the node's label template.

    Available: {name} {progress} {status} {host} {user} plus the timestamp
    forms {now} (ISO seconds UTC), {today}, and {time}. Unknown
    placeholders stay verbatim. A node without a label renders as its name.
    """
    if not node.label:
        return node.name
    now = (clock or (lambda: datetime.now(timezone.utc)))()
    variables: dict[str, Any] = {
        "name": node.name,
        "progress": node.progress if progress is None else progress,
        "status": node.status if status is None else status,
        "host": node.host or "",
        "user": node.user or "",
        "now": format_timestamp(now),
        "today": now.strftime("%Y-%m-%d"),
        "time": now.strftime("%H:%M:%S"),
    }
    template = scan(node.label)
    parts: list[str] = []
    pos = 0
    for placeholder in template.placeholders:
        parts.append(template.body[pos:placeholder.start])
        if placeholder.path in variables:
            parts.append(str(variables[placeholder.path]))
        else:
            parts.append(template.body[placeholder.start:placeholder.end])
        pos = placeholder.end
    parts.append(template.body[pos:])
    return "".join(parts)


def _rows(graph: WorkflowGraph, ledger: RunLedger) -> list[tuple[str, str, str, str, str]]:
    rows = []
    for name, node in graph.nodes.items():
        state = ledger.states.get(name, node.status)
        latest = ledger.latest(name)
        progress = str(latest.progress if latest else node.progress)
        updated = format_timestamp(latest.timestamp) if latest else "-"
        rows.append((name, state, progress, node.host or "-", updated))
    return rows


def _table(graph: WorkflowGraph, ledger: RunLedger) -> str:
    header = ("node", "status", "progress", "host", "updated_at")
    rows = _rows(graph, ledger)
    widths = [
        max(len(header[i]), *(len(row[i]) for row in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]
    def fmt(row):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
    lines = [fmt(header), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"


def _dot(graph: WorkflowGraph, ledger: RunLedger) -> str:
    lines = [f'digraph "{graph.name}" {{', "  rankdir=LR;"]
    for name, node in graph.nodes.items():
        latest = ledger.latest(name)
        label = render_node_label(
            node,
            status=ledger.states.get(name),
            progress=latest.progress if latest else None,
        )
        label = label.replace('"', '\\"')
        lines.append(f'  "{name}" [label="{label}"];')
    for a, b in sorted(graph.edges):
        lines.append(f'  "{a}" -> "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _html(graph: WorkflowGraph, ledger: RunLedger) -> str:
    rows = _rows(graph, ledger)
    body_rows = "\n".join(
        "      <tr>" + "".join(f"<td>{html_lib.escape(cell)}</td>" for cell in row) + "</tr>"
        for row in rows
    )
    return f"""<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>{html_lib.escape(graph.name)}</title>
<style>
body {{ font-family: sans-serif; margin: 2em; }}
table {{ border-collapse: collapse; }}
td, th {{ border: 1px solid #999; padding: 0.3em 0.8em; text-align: left; }}
th {{ background: #eee; }}
</style>
</head>
<body>
  <h1>{html_lib.escape(graph.name)}</h1>
  <table>
    <thead>
      <tr><th>node</th><th>status</th><th>progress</th><th>host</th><th>updated_at</th></tr>
    </thead>
    <tbody>
{body_rows}
    </tbody>
  </table>
</body>
</html>
"""


def _log(graph: WorkflowGraph, ledger: RunLedger) -> str:
    entries = []
    for name in graph.nodes:
        for record in ledger.records.get(name, []):
            entries.append(record)
    entries.sort(key=lambda r: r.timestamp)  # stable: file order preserved on ties
    return "".join(emit(record) for record in entries)


def export_view(graph: WorkflowGraph, ledger: RunLedger, format: str = "table") -> str:
    if format == "table":
        return _table(graph, ledger)
    if format == "dot":
        return _dot(graph, ledger)
    if format == "html":
        return _html(graph, ledger)
    if format == "log":
        return _log(graph, ledger)
    raise ValidationError(f"unknown view format {format!r} (one of {', '.join(VIEW_FORMATS)})")
