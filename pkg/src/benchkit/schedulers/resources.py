"""Resource target declarations (``resources.yaml``) and adapter construction."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

from ..errors import ValidationError
from ..yamlio import load_yaml
from .base import QueuePolicy, ResourceTarget, SchedulerAdapter
from .lsf import LsfAdapter
from .mock import MockScheduler
from .shell import LocalShellAdapter, SshAdapter
from .slurm import SlurmAdapter

#: Targets available without any resources file.
BUILTIN_TARGETS = {
    "local": ResourceTarget(name="local", kind="local"),
    "mock": ResourceTarget(name="mock", kind="mock"),
}


def _parse_policy(data: Any, context: str) -> QueuePolicy | None:
    if data is None:
        return None
    if not isinstance(data, Mapping):
        raise ValidationError(f"{context}: policy must be a mapping")
    known = {"max_queued_jobs", "max_wall_minutes", "max_nodes"}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"{context}: unknown policy keys {sorted(unknown)}")
    return QueuePolicy(**{key: data.get(key) for key in known})


def parse_resources(text: str) -> dict[str, ResourceTarget]:
    """Parse a resources document into named targets.

    Accepts either ``resources: [ {name: ..., kind: ...}, ... ]`` or a
    bare list of target mappings.
    """
    document = load_yaml(text)
    if isinstance(document, Mapping):
        entries = document.get("resources")
    else:
        entries = document
    if not isinstance(entries, list):
        raise ValidationError("resources file must hold a list of targets")
    targets: dict[str, ResourceTarget] = {}
    for entry in entries:
        if not isinstance(entry, Mapping):
            raise ValidationError("each resource entry must be a mapping")
        name = entry.get("name")
        if not name or not isinstance(name, str):
            raise ValidationError("each resource needs a string 'name'")
        if name in targets:
            raise ValidationError(f"duplicate resource name {name!r}")
        known = {"name", "kind", "host", "user", "workdir", "policy"}
        options = {k: v for k, v in entry.items() if k not in known}
        targets[name] = ResourceTarget(
            name=name,
            kind=entry.get("kind", "local"),
            host=entry.get("host"),
            user=entry.get("user"),
            remote_workdir=entry.get("workdir"),
            policy=_parse_policy(entry.get("policy"), f"resource {name!r}"),
            options=options,
        )
    return targets


def load_resources(path: str | Path | None) -> dict[str, ResourceTarget]:
    """Load targets from a file, merged over the built-in local/mock targets."""
    targets = dict(BUILTIN_TARGETS)
    if path is not None:
        declared = parse_resources(Path(path).read_text(encoding="utf-8"))
        targets.update(declared)
    return targets


def make_adapter(target: ResourceTarget, runner=None, **kwargs) -> SchedulerAdapter:
    if target.kind == "mock":
        return MockScheduler(target, **kwargs)
    if target.kind == "local":
        return LocalShellAdapter(target)
    if target.kind == "slurm":
        return SlurmAdapter(target, runner=runner)
    if target.kind == "lsf":
        return LsfAdapter(target, runner=runner)
    if target.kind == "ssh":
        return SshAdapter(target, runner=runner)
    raise ValidationError(f"no adapter for resource kind {target.kind!r}")


class AdapterPool:
    """Caches one adapter per target so queue state is shared per resource.

    When ``mock_state_dir`` is set, mock schedulers persist their queue
    there, letting separate CLI invocations share one simulated queue.
    """

    def __init__(
        self,
        targets: Mapping[str, ResourceTarget],
        mock_state_dir: str | Path | None = None,
    ):
        self.targets = dict(targets)
        self.mock_state_dir = Path(mock_state_dir) if mock_state_dir else None
        self._adapters: dict[str, SchedulerAdapter] = {}

    def register(self, adapter: SchedulerAdapter) -> SchedulerAdapter:
        """Install a preconfigured adapter for its target."""
        self.targets[adapter.target.name] = adapter.target
        self._adapters[adapter.target.name] = adapter
        return adapter

    def get(self, name: str) -> SchedulerAdapter:
        if name not in self._adapters:
            if name not in self.targets:
                raise ValidationError(
                    f"unknown resource {name!r}; declare it in resources.yaml"
                )
            target = self.targets[name]
            if target.kind == "mock" and self.mock_state_dir is not None:
                adapter: SchedulerAdapter = MockScheduler(
                    target, state_path=self.mock_state_dir / f".mock-{name}.json"
                )
            else:
                adapter = make_adapter(target)
            self._adapters[name] = adapter
        return self._adapters[name]

    def adapters(self):
        return self._adapters.values()
