"""FAIR-tagged result records and federated repository merging.

One self-describing YAML file per record, keyed by experiment id and a
globally unique identifier, makes repositories trivially diffable and
mergeable across users, machines, and organizations: Findable (guid +
index), Accessible (plain files), Interoperable (fixed YAML schema),
Reusable (provenance and license fields).
"""
from __future__ import annotations

import json
import logging
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

import yaml
from filelock import FileLock

from . import __version__
from .errors import RepositoryError, ValidationError
from .specmodel import Scalar, canonical_scalar, experiment_id as compute_experiment_id
from .sysinfo import SystemInfo, capture_system_info
from .yamlio import dump_yaml, load_yaml

logger = logging.getLogger(__name__)

RECORDS_DIR = "results"
INDEX_NAME = "index.jsonl"
LOCK_NAME = ".lock"

_UUID_RE = re.compile(r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}")

_PROVENANCE_FIELDS = ("user", "hostname", "resource", "org", "tool_version", "created_at")


@dataclass
class ResultRecord:
    """The outcome of one experiment point, with full provenance."""

    experiment_id: str
    assignments: dict[str, Scalar]
    guid: str
    provenance: dict[str, str]
    system: dict[str, Any]
    timers: list[dict[str, Any]] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    license: str | None = None
    spec_hash: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment_id": self.experiment_id,
            "assignments": dict(self.assignments),
            "guid": self.guid,
            "provenance": dict(self.provenance),
            "system": dict(self.system),
            "timers": list(self.timers),
            "metrics": dict(self.metrics),
            "artifacts": list(self.artifacts),
            "license": self.license,
            "spec_hash": self.spec_hash,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ResultRecord":
        return cls(
            experiment_id=data.get("experiment_id", ""),
            assignments=dict(data.get("assignments") or {}),
            guid=data.get("guid", ""),
            provenance=dict(data.get("provenance") or {}),
            system=dict(data.get("system") or {}),
            timers=list(data.get("timers") or []),
            metrics=dict(data.get("metrics") or {}),
            artifacts=list(data.get("artifacts") or []),
            license=data.get("license"),
            spec_hash=data.get("spec_hash", ""),
        )

    def validate(self) -> list[str]:
        problems = []
        if not self.experiment_id:
            problems.append("experiment_id: missing")
        if not _UUID_RE.fullmatch(self.guid or ""):
            problems.append("guid: not a UUID")
        if self.experiment_id and self.experiment_id != compute_experiment_id(self.assignments):
            problems.append("experiment_id: inconsistent with assignments")
        for name in _PROVENANCE_FIELDS:
            if not self.provenance.get(name):
                problems.append(f"provenance.{name}: missing")
        created = self.provenance.get("created_at")
        if created:
            try:
                _parse_created(created)
            except ValueError:
                problems.append("provenance.created_at: not an ISO-8601 timestamp")
        for name, value in self.metrics.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                problems.append(f"metrics.{name}: not a number")
        return problems


def _parse_created(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def new_record(
    assignments: Mapping[str, Scalar],
    metrics: Mapping[str, float] | None = None,
    timers: Iterable[Mapping[str, Any]] | None = None,
    artifacts: Iterable[str] | None = None,
    resource: str = "local",
    org: str = "unaffiliated",
    license: str | None = None,
    spec_hash: str = "",
    system: SystemInfo | None = None,
    guid: str | None = None,
    clock: Callable[[], datetime] | None = None,
) -> ResultRecord:
    """Build a record for one experiment point with provenance filled in."""
    system = system or capture_system_info()
    now = (clock or (lambda: datetime.now(timezone.utc)))()
    return ResultRecord(
        experiment_id=compute_experiment_id(dict(assignments)),
        assignments=dict(assignments),
        guid=guid or str(uuid.uuid4()),
        provenance={
            "user": str(system.user),
            "hostname": str(system.hostname),
            "resource": resource,
            "org": org,
            "tool_version": __version__,
            "created_at": now.strftime("%Y-%m-%dT%H:%M:%SZ"),
        },
        system=system.to_dict(),
        timers=[dict(t) for t in (timers or [])],
        metrics=dict(metrics or {}),
        artifacts=list(artifacts or []),
        license=license,
        spec_hash=spec_hash,
    )


@dataclass(frozen=True)
class MergeReport:
    copied: list[tuple[str, str]]
    skipped: list[tuple[str, str]]
    conflicts: list[tuple[str, str]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "copied": [list(pair) for pair in self.copied],
            "skipped": [list(pair) for pair in self.skipped],
            "conflicts": [list(pair) for pair in self.conflicts],
        }

    def to_yaml(self) -> str:
        return dump_yaml(self.to_dict())


@dataclass
class Predicate:
    """One query filter on a parameter: equality or inclusive numeric range."""

    param: str
    op: str  # "eq" | "range" | "ge" | "le" | "gt" | "lt"
    value: Any = None
    low: float | None = None
    high: float | None = None

    def matches(self, assignments: Mapping[str, Scalar]) -> bool:
        if self.param not in assignments:
            return False
        actual = assignments[self.param]
        if self.op == "eq":
            return canonical_scalar(actual) == canonical_scalar(self.value)
        try:
            number = float(actual)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            return False
        if self.op == "range":
            return self.low <= number <= self.high
        if self.op == "ge":
            return number >= self.low
        if self.op == "le":
            return number <= self.high
        if self.op == "gt":
            return number > self.low
        if self.op == "lt":
            return number < self.high
        return False


def parse_predicate(text: str) -> Predicate:
    """Parse ``k=v``, ``k=lo..hi``, ``k>=n``, ``k<=n``, ``k>n``, or ``k<n``."""
    for symbol, op in ((">=", "ge"), ("<=", "le"), (">", "gt"), ("<", "lt")):
        if symbol in text:
            param, _, raw = text.partition(symbol)
            try:
                bound = float(raw)
            except ValueError:
                raise ValidationError(f"predicate {text!r}: {raw!r} is not numeric") from None
            return Predicate(param=param.strip(), op=op, low=bound, high=bound)
    if "=" not in text:
        raise ValidationError(f"predicate {text!r} must look like key=value")
    param, _, raw = text.partition("=")
    raw = raw.strip()
    if ".." in raw:
        low_text, _, high_text = raw.partition("..")
        try:
            low, high = float(low_text), float(high_text)
        except ValueError:
            raise ValidationError(f"predicate {text!r}: range bounds must be numeric") from None
        return Predicate(param=param.strip(), op="range", low=low, high=high)
    value = yaml.safe_load(raw) if raw else ""
    if not isinstance(value, (str, int, float, bool)):
        value = raw
    return Predicate(param=param.strip(), op="eq", value=value)


class Repository:
    """Append-only store of result records under one root directory.

    Layout: ``<root>/results/<experiment_id>/<guid>.yaml`` plus
    ``<root>/index.jsonl``. Writers serialize through an advisory lock
    file; readers need no lock.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.records_dir = self.root / RECORDS_DIR
        self.index_path = self.root / INDEX_NAME

    @classmethod
    def create(cls, root: str | Path) -> "Repository":
        repo = cls(root)
        repo.records_dir.mkdir(parents=True, exist_ok=True)
        if not repo.index_path.exists():
            repo.index_path.write_text("", encoding="utf-8")
        return repo

    def _lock(self) -> FileLock:
        self.root.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.root / LOCK_NAME))

    # -- storage -------------------------------------------------------------

    def record_path(self, experiment_id: str, guid: str) -> Path:
        return self.records_dir / experiment_id / f"{guid}.yaml"

    def guids(self) -> set[tuple[str, str]]:
        found = set()
        if not self.records_dir.is_dir():
            return found
        for path in self.records_dir.glob("*/*.yaml"):
            found.add((path.parent.name, path.stem))
        return found

    def iter_records(self) -> Iterable[ResultRecord]:
        if not self.records_dir.is_dir():
            return
        for path in sorted(self.records_dir.glob("*/*.yaml")):
            data = load_yaml(path.read_text(encoding="utf-8"))
            if isinstance(data, Mapping):
                yield ResultRecord.from_dict(data)

    def _append_index(self, record: ResultRecord):
        row = {
            "experiment_id": record.experiment_id,
            "guid": record.guid,
            "created_at": record.provenance.get("created_at"),
            "path": f"{RECORDS_DIR}/{record.experiment_id}/{record.guid}.yaml",
        }
        with open(self.index_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(row, sort_keys=True) + "\n")

    def rebuild_index(self):
        rows = []
        for record in self.iter_records():
            rows.append(
                json.dumps(
                    {
                        "experiment_id": record.experiment_id,
                        "guid": record.guid,
                        "created_at": record.provenance.get("created_at"),
                        "path": f"{RECORDS_DIR}/{record.experiment_id}/{record.guid}.yaml",
                    },
                    sort_keys=True,
                )
            )
        self.index_path.write_text("".join(row + "\n" for row in rows), encoding="utf-8")

    # -- operations ------------------------------------------------------------

    def record(self, result: ResultRecord) -> str:
        """Validate and append one record; returns its guid."""
        problems = result.validate()
        if problems:
            raise RepositoryError("record is invalid: " + "; ".join(problems))
        with self._lock():
            self.records_dir.mkdir(parents=True, exist_ok=True)
            path = self.record_path(result.experiment_id, result.guid)
            if path.exists() or (result.experiment_id, result.guid) in self.guids():
                raise RepositoryError(f"duplicate guid {result.guid}")
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(dump_yaml(result.to_dict()), encoding="utf-8")
            tmp.replace(path)
            self._append_index(result)
        return result.guid

    def merge(self, source: "Repository") -> MergeReport:
        """Copy every source record absent here; never overwrite on conflict.

        Identical guid with identical content is skipped; identical guid
        with differing content is reported as a conflict and this
        repository stays unchanged for that guid. Merging is idempotent
        and commutative up to record order.
        """
        if not source.records_dir.is_dir():
            return MergeReport(copied=[], skipped=[], conflicts=[])
        copied, skipped, conflicts = [], [], []
        with self._lock():
            self.records_dir.mkdir(parents=True, exist_ok=True)
            if not self.index_path.exists():
                self.index_path.write_text("", encoding="utf-8")
            for src_path in sorted(source.records_dir.glob("*/*.yaml")):
                experiment_id, guid = src_path.parent.name, src_path.stem
                dest_path = self.record_path(experiment_id, guid)
                data = src_path.read_bytes()
                if dest_path.exists():
                    if dest_path.read_bytes() == data:
                        skipped.append((experiment_id, guid))
                    else:
                        conflicts.append((experiment_id, guid))
                    continue
                dest_path.parent.mkdir(parents=True, exist_ok=True)
                tmp = dest_path.with_suffix(".tmp")
                tmp.write_bytes(data)
                tmp.replace(dest_path)
                copied.append((experiment_id, guid))
            if copied:
                self.rebuild_index()
        return MergeReport(copied=copied, skipped=skipped, conflicts=conflicts)

    def query(self, predicates: Iterable[Predicate] = ()) -> list[ResultRecord]:
        """Records whose assignments satisfy every predicate, by created_at.

        A predicate naming a parameter that no stored record has yields an
        empty result with a warning rather than an error.
        """
        predicates = list(predicates)
        records = list(self.iter_records())
        known_params = set()
        for record in records:
            known_params.update(record.assignments)
        for predicate in predicates:
            if predicate.param not in known_params:
                logger.warning(
                    "query filter names unknown parameter %r; returning no records",
                    predicate.param,
                )
                return []
        matched = [
            record
            for record in records
            if all(predicate.matches(record.assignments) for predicate in predicates)
        ]
        matched.sort(key=lambda r: r.provenance.get("created_at") or "")
        return matched


def merge(dest: Repository, source: Repository) -> MergeReport:
    return dest.merge(source)
