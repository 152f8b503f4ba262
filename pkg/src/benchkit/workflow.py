"""Workflow graphs: named script nodes plus dependency chains forming a DAG.

The document shape::

    workflow:
      nodes:
        fetch-data:
          user: alice
          host: localhost
          status: ready
          label: '{name}\\nprogress={progress}'
          script: fetch-data.sh
        ...
      dependencies:
        - start,fetch-data,compute,analyze,end

Each dependency entry is a chain: ``a,b,c`` contributes the edges (a,b)
and (b,c). Multiple entries union their edges; duplicates collapse.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import CycleError, WorkflowError
from .yamlio import load_yaml

NODE_STATES = (
    "undefined",
    "ready",
    "submitted",
    "pending",
    "running",
    "done",
    "failed",
    "cancelled",
    "unknown",
)


@dataclass
class WorkflowNode:
    name: str
    user: str | None = None
    host: str | None = None
    script: str | None = None
    label: str | None = None
    status: str = "ready"
    progress: int = 0
    resource: str | None = None

    def __post_init__(self):
        if self.status not in NODE_STATES:
            raise WorkflowError(f"node {self.name!r}: unknown status {self.status!r}")
        if not 0 <= self.progress <= 100:
            raise WorkflowError(f"node {self.name!r}: progress must be in [0, 100]")


@dataclass(frozen=True)
class WorkflowGraph:
    name: str
    nodes: dict[str, WorkflowNode]
    edges: frozenset[tuple[str, str]]
    source_dir: Path | None = None

    def predecessors(self, node: str) -> list[str]:
        return sorted(a for a, b in self.edges if b == node)

    def successors(self, node: str) -> list[str]:
        return sorted(b for a, b in self.edges if a == node)

    def descendants(self, node: str) -> set[str]:
        seen: set[str] = set()
        frontier = [node]
        while frontier:
            current = frontier.pop()
            for child in self.successors(current):
                if child not in seen:
                    seen.add(child)
                    frontier.append(child)
        return seen


def _find_cycle(nodes: Iterable[str], edges: set[tuple[str, str]]) -> list[str]:
    adjacency: dict[str, list[str]] = {name: [] for name in nodes}
    for a, b in edges:
        adjacency[a].append(b)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {name: WHITE for name in adjacency}
    stack: list[str] = []

    def visit(name: str) -> list[str] | None:
        color[name] = GREY
        stack.append(name)
        for child in adjacency[name]:
            if color[child] == GREY:
                return stack[stack.index(child):]
            if color[child] == WHITE:
                cycle = visit(child)
                if cycle is not None:
                    return cycle
        stack.pop()
        color[name] = BLACK
        return None

    for name in adjacency:
        if color[name] == WHITE:
            cycle = visit(name)
            if cycle is not None:
                return cycle
    return []


def _build_node(name: str, data: Any) -> WorkflowNode:
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise WorkflowError(f"node {name!r} must be a mapping")
    declared = data.get("name")
    if declared is not None and declared != name:
        raise WorkflowError(f"node key {name!r} disagrees with its name field {declared!r}")
    return WorkflowNode(
        name=name,
        user=data.get("user"),
        host=data.get("host"),
        script=data.get("script"),
        label=data.get("label"),
        status=data.get("status", "ready"),
        progress=int(data.get("progress", 0)),
        resource=data.get("resource"),
    )


def parse_workflow(text: str, source_path: str | Path | None = None) -> WorkflowGraph:
    """Parse a workflow document and validate that it is a DAG."""
    document = load_yaml(text)
    if not isinstance(document, Mapping) or not isinstance(document.get("workflow"), Mapping):
        raise WorkflowError("document must contain a top-level 'workflow' mapping")
    workflow = document["workflow"]
    nodes_section = workflow.get("nodes")
    if not isinstance(nodes_section, Mapping) or not nodes_section:
        raise WorkflowError("'workflow.nodes' must be a non-empty mapping")

    nodes = {str(name): _build_node(str(name), data) for name, data in nodes_section.items()}

    edges: set[tuple[str, str]] = set()
    dependencies = workflow.get("dependencies") or []
    if not isinstance(dependencies, list):
        raise WorkflowError("'workflow.dependencies' must be a list of chains")
    for entry in dependencies:
        if not isinstance(entry, str):
            raise WorkflowError(f"dependency entry {entry!r} must be a comma-separated chain")
        chain = [part.strip() for part in entry.split(",") if part.strip()]
        for node_name in chain:
            if node_name not in nodes:
                raise WorkflowError(f"dependency chain references unknown node {node_name!r}")
        edges.update(zip(chain, chain[1:]))

    cycle = _find_cycle(nodes, edges)
    if cycle:
        raise CycleError(cycle)

    source_dir = Path(source_path).parent.resolve() if source_path is not None else None
    return WorkflowGraph(
        name=str(workflow.get("name", "workflow")),
        nodes=nodes,
        edges=frozenset(edges),
        source_dir=source_dir,
    )


def parse_workflow_file(path: str | Path) -> WorkflowGraph:
    path = Path(path)
    return parse_workflow(path.read_text(encoding="utf-8"), source_path=path)


def topological_order(graph: WorkflowGraph) -> list[str]:
    """One valid topological order (document order among ties)."""
    remaining = dict.fromkeys(graph.nodes)
    indegree = {name: 0 for name in graph.nodes}
    for _, b in graph.edges:
        indegree[b] += 1
    order: list[str] = []
    while remaining:
        ready = [name for name in remaining if indegree[name] == 0]
        if not ready:
            raise CycleError(list(remaining))
        for name in ready:
            order.append(name)
            del remaining[name]
            for child in graph.successors(name):
                indegree[child] -= 1
    return order
