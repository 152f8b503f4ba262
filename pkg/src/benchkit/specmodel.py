"""Experiment specification parsing, grid expansion, and variable resolution.

A spec document has an ``application`` section of scalar settings, an
optional ``data`` path template, an ``experiment`` section mapping
parameter names to value sets, and an optional ``system`` section. The
experiment section spans a Cartesian grid: each parameter contributes one
axis, and every combination of axis values becomes one experiment point.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Union

import yaml

from .errors import GenerationError, NotAScalar, SpecError, UndefinedVariable
from .yamlio import load_yaml

Scalar = Union[str, int, float, bool]

DEFAULT_GRID_CAP = 100_000

PARAM_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_RANGE_RE = re.compile(r"(\d+)\s*-\s*(\d+)(?::(\d+))?")
_GENERATOR_RE = re.compile(r"([a-z_]+)\((.*)\)")
_UNSAFE_ID_CHAR_RE = re.compile(r"[^A-Za-z0-9._]")

#: Value-set kinds, named after the source syntax that produced them.
KIND_SINGLE = "single"
KIND_CSV = "csv-multivalue"
KIND_LIST = "explicit-list"
KIND_RANGE = "range"
KIND_GENERATOR = "generator"


def is_scalar(value: Any) -> bool:
    return isinstance(value, (str, int, float, bool))


def canonical_scalar(value: Scalar) -> str:
    """Render a scalar in its canonical string form (YAML-style booleans)."""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


@dataclass(frozen=True)
class ValueSet:
    """The materialized values of one experiment axis."""

    kind: str
    values: tuple[Scalar, ...]
    source: str

    def __post_init__(self):
        if not self.values:
            raise SpecError(f"value set {self.source!r} materialized to no values")


@dataclass(frozen=True)
class ExperimentPoint:
    """One concrete parameter assignment drawn from the grid."""

    assignments: dict[str, Scalar]
    id: str
    ordinal: int


@dataclass(frozen=True)
class ExperimentSpec:
    """A parsed experiment specification document."""

    application: dict[str, Scalar]
    experiment: dict[str, ValueSet]
    raw: dict[str, Any]
    data: str | None = None
    system: dict[str, Any] | None = None


def sanitize_id_component(value: Scalar) -> str:
    """Make a scalar filesystem-safe: anything outside [A-Za-z0-9._] becomes '-'."""
    return _UNSAFE_ID_CHAR_RE.sub("-", canonical_scalar(value))


def experiment_id(assignments: Mapping[str, Scalar]) -> str:
    """Deterministic identifier for a parameter assignment.

    ``key1_value1-key2_value2-...`` in the spec's key order; the empty
    assignment (a spec with no experiment section) maps to ``default``.
    """
    if not assignments:
        return "default"
    return "-".join(f"{key}_{sanitize_id_component(value)}" for key, value in assignments.items())


def _coerce_item(text: str) -> Scalar:
    """Give a bare string item its natural scalar type ('30' -> 30)."""
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        return text
    if isinstance(value, (bool, int, float)):
        return value
    return text


def _evaluate_generator(name: str, func: str, args_text: str, source: str) -> tuple[Scalar, ...]:
    # Deliberately tiny expression set; arbitrary code never runs during expansion.
    try:
        args = [int(part.strip()) for part in args_text.split(",")] if args_text.strip() else []
    except ValueError:
        raise SpecError(
            f"experiment parameter {name!r}: generator {source!r} takes integer arguments"
        ) from None
    if func == "range":
        if not 1 <= len(args) <= 3:
            raise SpecError(f"experiment parameter {name!r}: range() takes 1 to 3 arguments")
        values = tuple(range(*args))
        if not values:
            raise SpecError(f"experiment parameter {name!r}: {source!r} produces no values")
        return values
    if func == "repeat":
        if len(args) != 1 or args[0] < 1:
            raise SpecError(
                f"experiment parameter {name!r}: repeat(n) takes one positive count"
            )
        return tuple(range(1, args[0] + 1))
    raise SpecError(
        f"experiment parameter {name!r}: unknown generator function {func!r} "
        "(supported: range, repeat)"
    )


def _materialize(name: str, value: Any) -> ValueSet:
    """Turn one experiment entry into a ValueSet.

    Strings are inspected for the multi-value syntaxes: a generator call
    like ``range(1,4)``, a comma-separated list like ``1,30,60``, or an
    inclusive integer span like ``1-10`` / ``0-8:2``. Everything else is a
    single value; YAML lists are taken verbatim.
    """
    if isinstance(value, list):
        if not value:
            raise SpecError(f"experiment parameter {name!r} has an empty list")
        for item in value:
            if not is_scalar(item):
                raise SpecError(
                    f"experiment parameter {name!r} contains a non-scalar list item: {item!r}"
                )
        return ValueSet(KIND_LIST, tuple(value), source=str(value))
    if isinstance(value, str):
        text = value.strip()
        generator = _GENERATOR_RE.fullmatch(text)
        if generator:
            values = _evaluate_generator(name, generator.group(1), generator.group(2), text)
            return ValueSet(KIND_GENERATOR, values, source=value)
        if "," in text:
            items = [part.strip() for part in text.split(",")]
            if any(not item for item in items):
                raise SpecError(f"experiment parameter {name!r} has an empty item in {value!r}")
            return ValueSet(KIND_CSV, tuple(_coerce_item(item) for item in items), source=value)
        span = _RANGE_RE.fullmatch(text)
        if span:
            start, end = int(span.group(1)), int(span.group(2))
            step = int(span.group(3)) if span.group(3) else 1
            if step < 1:
                raise SpecError(f"experiment parameter {name!r}: range step must be >= 1")
            if start > end:
                raise SpecError(
                    f"experiment parameter {name!r}: range {value!r} runs backwards"
                )
            return ValueSet(KIND_RANGE, tuple(range(start, end + 1, step)), source=value)
        return ValueSet(KIND_SINGLE, (value,), source=value)
    if is_scalar(value):
        return ValueSet(KIND_SINGLE, (value,), source=str(value))
    raise SpecError(f"experiment parameter {name!r} must be a scalar or list, got {type(value).__name__}")


def parse_spec(text: str) -> ExperimentSpec:
    """Parse a spec document from YAML text.

    Unknown top-level keys are retained in ``raw`` and stay resolvable as
    variables. A missing experiment section yields a grid of exactly one
    empty point.
    """
    document = load_yaml(text)
    if not isinstance(document, Mapping):
        raise SpecError("spec document must be a top-level mapping")
    document = dict(document)

    application = document.get("application")
    if not isinstance(application, Mapping):
        raise SpecError("spec requires an 'application' mapping")
    for key, value in application.items():
        if not is_scalar(value):
            raise SpecError(f"application.{key} must be a scalar, got {type(value).__name__}")
    if "name" not in application:
        raise SpecError("application.name is required")

    data = document.get("data")
    if data is not None and not isinstance(data, str):
        raise SpecError("'data' must be a path template string")

    experiment_section = document.get("experiment")
    if experiment_section is None:
        experiment_section = {}
    if not isinstance(experiment_section, Mapping):
        raise SpecError("'experiment' must be a mapping of parameter names to value sets")
    experiment: dict[str, ValueSet] = {}
    for name, value in experiment_section.items():
        if not isinstance(name, str) or not PARAM_NAME_RE.fullmatch(name):
            raise SpecError(f"invalid experiment parameter name {name!r}")
        experiment[name] = _materialize(name, value)

    system = document.get("system")
    if system is not None and not isinstance(system, Mapping):
        raise SpecError("'system' must be a mapping")

    return ExperimentSpec(
        application=dict(application),
        experiment=experiment,
        raw=document,
        data=data,
        system=dict(system) if system is not None else None,
    )


def grid_size(spec: ExperimentSpec) -> int:
    return math.prod(len(vs.values) for vs in spec.experiment.values())


def expand_grid(spec: ExperimentSpec, cap: int | None = DEFAULT_GRID_CAP) -> list[ExperimentPoint]:
    """Expand the experiment section into its full Cartesian grid.

    Points come out in odometer order: the first parameter varies slowest,
    the last varies fastest. Ordinals are consecutive from 0. A spec
    without experiment parameters expands to one empty point.
    """
    names = list(spec.experiment)
    count = grid_size(spec)
    if cap is not None and count > cap:
        raise SpecError(
            f"grid expands to {count} points, exceeding the cap of {cap}; "
            "raise the cap explicitly if this is intended"
        )

    points: list[ExperimentPoint] = []
    seen: dict[str, dict[str, Scalar]] = {}
    axes = (spec.experiment[name].values for name in names)
    for ordinal, combo in enumerate(itertools.product(*axes)):
        assignments = dict(zip(names, combo))
        ident = experiment_id(assignments)
        if ident in seen:
            raise GenerationError(
                f"experiment id {ident!r} collides between points "
                f"{seen[ident]!r} and {assignments!r}; rename values so their "
                "sanitized forms differ"
            )
        seen[ident] = assignments
        points.append(ExperimentPoint(assignments=assignments, id=ident, ordinal=ordinal))
    return points


def _descend(document: Any, segments: Iterable[str], path: str) -> Any:
    node = document
    for segment in segments:
        if not isinstance(node, Mapping) or segment not in node:
            raise UndefinedVariable(path)
        node = node[segment]
    return node


def resolve_variable(
    path: str,
    point: ExperimentPoint | None,
    spec: ExperimentSpec | None,
    env: Mapping[str, str] | None = None,
    db: Mapping[str, Scalar] | None = None,
) -> str:
    """Resolve a dot-notation variable path to its canonical scalar string.

    Namespaces: ``experiment.*`` reads the point's assignments, ``os.*``
    the environment map, ``db.*`` the internal key-value store
    (``cloudmesh.*`` is accepted as a compatibility alias). Any other
    first segment descends into the spec's raw document.
    """
    segments = path.split(".")
    if not segments or not all(PARAM_NAME_RE.fullmatch(s) for s in segments):
        raise UndefinedVariable(path, f"'{path}' is not a valid dot-notation path")
    head, rest = segments[0], segments[1:]

    if head == "experiment":
        if len(rest) == 1 and point is not None and rest[0] in point.assignments:
            return canonical_scalar(point.assignments[rest[0]])
        raise UndefinedVariable(path)
    if head == "os":
        if len(rest) == 1 and env is not None and rest[0] in env:
            return str(env[rest[0]])
        raise UndefinedVariable(path)
    if head in ("db", "cloudmesh"):
        key = ".".join(rest)
        if rest and db is not None and key in db:
            value = db[key]
            if not is_scalar(value):
                raise NotAScalar(path)
            return canonical_scalar(value)
        raise UndefinedVariable(path)

    if spec is None:
        raise UndefinedVariable(path)
    value = _descend(spec.raw, segments, path)
    if value is None:
        raise UndefinedVariable(path, f"'{path}' is present but null")
    if not is_scalar(value):
        raise NotAScalar(path)
    return canonical_scalar(value)
