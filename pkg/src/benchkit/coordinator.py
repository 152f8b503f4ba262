"""DAG workflow execution over scheduler adapters, with stateless resync.

The coordinator owns no authoritative run state: every job appends to its
own status file on the resource where it runs, and the client can always
rebuild its view of a run purely by re-reading those files (``sync``).
Killing the client mid-run loses nothing.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping

from .errors import PolicyError, SubmitError, TransportError, WorkflowError
from .schedulers import (
    AdapterPool,
    JobHandle,
    JobState,
    MockScheduler,
    ResourceTarget,
    SchedulerAdapter,
)
from .schedulers.resources import BUILTIN_TARGETS
from .status import StatusRecord, append, parse_records
from .workflow import WorkflowGraph, WorkflowNode, topological_order
from .yamlio import dump_yaml

logger = logging.getLogger(__name__)

TERMINAL_NODE_STATES = frozenset({"done", "failed", "cancelled"})

ACTIVE_NODE_STATES = frozenset({"submitted", "pending", "running"})

_JOB_TO_NODE_STATE = {
    JobState.PENDING: "pending",
    JobState.RUNNING: "running",
    JobState.DONE: "done",
    JobState.FAILED: "failed",
    JobState.CANCELLED: "cancelled",
    JobState.UNKNOWN: "unknown",
}


@dataclass
class RunLedger:
    """Reconstructible view of one workflow run."""

    workflow: str
    states: dict[str, str] = field(default_factory=dict)
    records: dict[str, list[StatusRecord]] = field(default_factory=dict)
    handles: dict[str, JobHandle] = field(default_factory=dict)
    started_at: datetime | None = None
    updated_at: datetime | None = None
    start_sequence: list[str] = field(default_factory=list)

    def latest(self, node: str) -> StatusRecord | None:
        records = self.records.get(node) or []
        if not records:
            return None
        best = max(range(len(records)), key=lambda i: (records[i].timestamp, i))
        return records[best]

    def progress(self, node: str) -> int:
        record = self.latest(node)
        return record.progress if record is not None else 0

    def terminal_states(self) -> dict[str, str]:
        return {n: s for n, s in self.states.items() if s in TERMINAL_NODE_STATES}

    @property
    def run_state(self) -> str:
        if any(s in ("failed", "cancelled") for s in self.states.values()):
            return "failed"
        if all(s == "done" for s in self.states.values()):
            return "done"
        return "incomplete"

    def to_dict(self) -> dict:
        def record_dict(r: StatusRecord) -> dict:
            return {
                "ts": r.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "resource": r.resource,
                "name": r.name,
                "state": r.state,
                "progress": r.progress,
                "msg": r.message,
            }

        return {
            "workflow": self.workflow,
            "started_at": self.started_at.strftime("%Y-%m-%dT%H:%M:%SZ") if self.started_at else None,
            "updated_at": self.updated_at.strftime("%Y-%m-%dT%H:%M:%SZ") if self.updated_at else None,
            "states": dict(self.states),
            "handles": {
                node: {
                    "resource": h.resource,
                    "native_id": h.native_id,
                    "experiment_id": h.experiment_id,
                    "submitted_at": h.submitted_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
                }
                for node, h in self.handles.items()
            },
            "records": {node: [record_dict(r) for r in rs] for node, rs in self.records.items()},
            "start_sequence": list(self.start_sequence),
        }


def node_status_path(run_dir: Path, node: str) -> Path:
    return run_dir / node / "status.log"


class Coordinator:
    """Drives one workflow run; see :func:`run` and :func:`sync`."""

    def __init__(
        self,
        graph: WorkflowGraph,
        run_dir: str | Path | None = None,
        resources: Mapping[str, ResourceTarget] | None = None,
        pool: AdapterPool | None = None,
        mode: str = "local",
        width: int = 4,
        poll_interval: float = 0.05,
    ):
        if mode not in ("local", "distributed"):
            raise WorkflowError(f"unknown run mode {mode!r}")
        if width < 1:
            raise WorkflowError("width must be >= 1")
        self.graph = graph
        self.run_dir = Path(run_dir) if run_dir is not None else Path(f"{graph.name}.run")
        self.mode = mode
        self.width = width
        self.poll_interval = poll_interval
        targets = dict(BUILTIN_TARGETS)
        if resources:
            targets.update(resources)
        self.pool = pool if pool is not None else AdapterPool(targets)

    # -- target & path resolution ----------------------------------------

    def _target_name(self, node: WorkflowNode) -> str:
        if self.mode == "local":
            return "local"
        if node.resource:
            return node.resource
        if node.host in (None, "", "localhost", "127.0.0.1"):
            return "local"
        # implicit ssh target named after the host
        if node.host not in self.pool.targets:
            self.pool.targets[node.host] = ResourceTarget(
                name=node.host, kind="ssh", host=node.host, user=node.user
            )
        return node.host

    def _adapter(self, node: WorkflowNode) -> SchedulerAdapter:
        return self.pool.get(self._target_name(node))

    def _script_path(self, node: WorkflowNode) -> Path:
        script = Path(node.script)
        if not script.is_absolute() and self.graph.source_dir is not None:
            script = self.graph.source_dir / script
        return script

    @staticmethod
    def _adapter_now(adapter: SchedulerAdapter) -> datetime:
        if isinstance(adapter, MockScheduler):
            return adapter.now()
        return datetime.now(timezone.utc).replace(microsecond=0)

    def _write_record(self, node: WorkflowNode, state: str, progress: int, message: str = ""):
        adapter = self._adapter(node)
        append(
            node_status_path(self.run_dir, node.name),
            StatusRecord(
                timestamp=self._adapter_now(adapter),
                resource=adapter.target.name,
                name=node.name,
                state=state,
                progress=progress,
                message=message,
            ),
        )

    # -- run ----------------------------------------------------------------

    def run(
        self,
        resume: bool = True,
        poll_hook: Callable[[RunLedger], None] | None = None,
    ) -> RunLedger:
        """Execute the graph: a node starts only after all predecessors are done.

        Unordered nodes run concurrently up to the configured width. A
        failing node marks all of its transitive successors cancelled and
        the run failed; independent branches still run to completion.
        """
        graph = self.graph
        ledger = RunLedger(workflow=graph.name, states={n: "ready" for n in graph.nodes})
        ledger.started_at = datetime.now(timezone.utc).replace(microsecond=0)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        order = topological_order(graph)

        if resume:
            for name in order:
                path = node_status_path(self.run_dir, name)
                if path.is_file():
                    records = parse_records(path.read_text(encoding="utf-8", errors="replace"))
                    if records:
                        ledger.records[name] = records
                        latest = ledger.latest(name)
                        if latest is not None and latest.state == "done":
                            ledger.states[name] = "done"

        try:
            while True:
                self._submit_ready(ledger, order)
                self._poll_active(ledger)
                ledger.updated_at = datetime.now(timezone.utc).replace(microsecond=0)
                if poll_hook is not None:
                    poll_hook(ledger)
                if all(state in TERMINAL_NODE_STATES for state in ledger.states.values()):
                    break
                self._wait_for_progress(ledger)
        except KeyboardInterrupt:
            self._cancel_active(ledger)
            self._flush(ledger)
            raise
        self._flush(ledger)
        return ledger

    def _submit_ready(self, ledger: RunLedger, order: list[str]):
        changed = True
        while changed:
            changed = False
            active = sum(1 for s in ledger.states.values() if s in ACTIVE_NODE_STATES)
            for name in order:
                if ledger.states[name] != "ready":
                    continue
                preds = self.graph.predecessors(name)
                if any(ledger.states[p] != "done" for p in preds):
                    continue
                node = self.graph.nodes[name]
                if not node.script:
                    # bookkeeping-only node: completes the moment it is reached
                    self._write_record(node, "running", 0)
                    self._write_record(node, "done", 100)
                    ledger.states[name] = "done"
                    ledger.start_sequence.append(name)
                    self._refresh_records(ledger, name)
                    changed = True
                    continue
                if active >= self.width:
                    continue
                adapter = self._adapter(node)
                node_dir = self.run_dir / name
                node_dir.mkdir(parents=True, exist_ok=True)
                script = self._script_path(node)
                try:
                    handle = adapter.submit(script, name, workdir=node_dir)
                except PolicyError:
                    continue  # queue full: back off and retry next cycle
                except (SubmitError, TransportError) as exc:
                    logger.error("submit of node %s failed: %s", name, exc)
                    self._write_record(node, "failed", 0, str(exc))
                    ledger.states[name] = "failed"
                    self._refresh_records(ledger, name)
                    self._propagate_failure(ledger, name)
                    changed = True
                    continue
                ledger.handles[name] = handle
                ledger.states[name] = "submitted"
                active += 1
                changed = True

    def _poll_active(self, ledger: RunLedger):
        for name, state in list(ledger.states.items()):
            if state not in ACTIVE_NODE_STATES:
                continue
            node = self.graph.nodes[name]
            handle = ledger.handles.get(name)
            if handle is None:
                continue
            adapter = self._adapter(node)
            job_state = adapter.status(handle)
            node_state = _JOB_TO_NODE_STATE[job_state]
            if node_state == "unknown":
                node_state = state  # keep the last solid observation
            if node_state == "running" and name not in ledger.start_sequence:
                ledger.start_sequence.append(name)
            if node_state in ("done", "failed", "cancelled") and name not in ledger.start_sequence:
                ledger.start_sequence.append(name)
            ledger.states[name] = node_state
            self._refresh_records(ledger, name)
            if node_state == "failed":
                self._propagate_failure(ledger, name)

    def _refresh_records(self, ledger: RunLedger, name: str):
        node = self.graph.nodes[name]
        adapter = self._adapter(node)
        path = self._status_path_for(adapter, name)
        text = adapter.read_text(path)
        if text:
            ledger.records[name] = parse_records(text)

    def _status_path_for(self, adapter: SchedulerAdapter, name: str):
        remote_dir = getattr(adapter, "_remote_dir", None)
        if callable(remote_dir):
            return f"{remote_dir(name)}/status.log"
        return node_status_path(self.run_dir, name)

    def _propagate_failure(self, ledger: RunLedger, failed_node: str):
        for name in sorted(self.graph.descendants(failed_node)):
            if ledger.states[name] in TERMINAL_NODE_STATES:
                continue
            handle = ledger.handles.get(name)
            if handle is not None:
                self._adapter(self.graph.nodes[name]).cancel(handle)
            ledger.states[name] = "cancelled"
            self._write_record(
                self.graph.nodes[name], "cancelled", ledger.progress(name),
                f"predecessor {failed_node} failed",
            )
            self._refresh_records(ledger, name)

    def _cancel_active(self, ledger: RunLedger):
        for name, state in ledger.states.items():
            if state not in ACTIVE_NODE_STATES:
                continue
            handle = ledger.handles.get(name)
            if handle is not None:
                try:
                    self._adapter(self.graph.nodes[name]).cancel(handle)
                except TransportError:
                    pass
            ledger.states[name] = "cancelled"

    def _submittable(self, ledger: RunLedger) -> bool:
        return any(
            ledger.states[name] == "ready"
            and all(ledger.states[p] == "done" for p in self.graph.predecessors(name))
            for name in self.graph.nodes
        )

    def _wait_for_progress(self, ledger: RunLedger):
        active_adapters = {
            id(self._adapter(self.graph.nodes[name])): self._adapter(self.graph.nodes[name])
            for name, state in ledger.states.items()
            if state in ACTIVE_NODE_STATES
        }
        if not active_adapters:
            if self._submittable(ledger):
                return  # completions this cycle unblocked successors
            if any(s == "ready" for s in ledger.states.values()):
                raise WorkflowError(
                    "workflow stalled: nodes remain ready but nothing is running"
                )
            return
        mocks = [a for a in active_adapters.values() if isinstance(a, MockScheduler)]
        for mock in mocks:
            mock.advance(1)
        if len(mocks) != len(active_adapters):
            time.sleep(self.poll_interval)

    def _flush(self, ledger: RunLedger):
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "ledger.yaml").write_text(dump_yaml(ledger.to_dict()), encoding="utf-8")

    # -- sync -----------------------------------------------------------------

    def sync(self) -> RunLedger:
        """Rebuild the ledger purely from status files; remote state is never touched.

        Nodes whose status file is missing or unreadable come back as
        ``unknown``; everything else reflects the latest record found.
        """
        ledger = RunLedger(workflow=self.graph.name)
        for name, node in self.graph.nodes.items():
            adapter = self._adapter(node)
            text = adapter.read_text(self._status_path_for(adapter, name))
            records = parse_records(text) if text else []
            if records:
                ledger.records[name] = records
                latest = ledger.latest(name)
                ledger.states[name] = latest.state if latest is not None else "unknown"
            else:
                ledger.states[name] = "unknown"
        ledger.updated_at = datetime.now(timezone.utc).replace(microsecond=0)
        return ledger


def run(
    graph: WorkflowGraph,
    run_dir: str | Path | None = None,
    resources: Mapping[str, ResourceTarget] | None = None,
    pool: AdapterPool | None = None,
    mode: str = "local",
    width: int = 4,
    poll_interval: float = 0.05,
    resume: bool = True,
    poll_hook: Callable[[RunLedger], None] | None = None,
) -> RunLedger:
    coordinator = Coordinator(
        graph, run_dir=run_dir, resources=resources, pool=pool,
        mode=mode, width=width, poll_interval=poll_interval,
    )
    return coordinator.run(resume=resume, poll_hook=poll_hook)


def sync(
    graph: WorkflowGraph,
    run_dir: str | Path | None = None,
    resources: Mapping[str, ResourceTarget] | None = None,
    pool: AdapterPool | None = None,
    mode: str = "local",
) -> RunLedger:
    coordinator = Coordinator(graph, run_dir=run_dir, resources=resources, pool=pool, mode=mode)
    return coordinator.sync()
