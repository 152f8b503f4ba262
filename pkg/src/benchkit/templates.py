"""Placeholder substitution for batch-script and config templates.

Templates contain ``{dot.path}`` placeholders resolved through the spec's
variable rules. ``{{`` and ``}}`` are literal-brace escapes, needed
because shell text like ``${VAR}`` would otherwise be scanned as a
placeholder: a ``$`` before ``{`` does not suppress substitution, so
authors write ``${{VAR}}`` for shell expansion inside a template.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import RenderError, ScanError, UndefinedVariable, NotAScalar
from .specmodel import (
    PARAM_NAME_RE,
    ExperimentPoint,
    ExperimentSpec,
    Scalar,
    resolve_variable,
)
from .yamlio import dump_yaml

MODE_STRICT = "strict"
MODE_LENIENT = "lenient"


@dataclass(frozen=True)
class Placeholder:
    path: str
    start: int
    end: int


@dataclass(frozen=True)
class _Escape:
    literal: str
    start: int
    end: int


@dataclass
class TemplateDocument:
    """A scanned template: body text plus the placeholder spans found in it."""

    body: str
    placeholders: list[Placeholder]
    warnings: list[str] = field(default_factory=list)
    source_path: str | None = None
    _escapes: list[_Escape] = field(default_factory=list)


@dataclass
class RenderResult:
    text: str
    warnings: list[str] = field(default_factory=list)


def _location(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    column = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, column


def _is_dot_path(text: str) -> bool:
    if not text:
        return False
    return all(PARAM_NAME_RE.fullmatch(segment) for segment in text.split("."))


def scan(text: str, source_path: str | Path | None = None) -> TemplateDocument:
    """Find every ``{dot.path}`` placeholder in a template.

    Tokens whose interior is not a valid dot path (``{0}``, ``{ x }``,
    shell fragments like ``{a:-b}``) are left verbatim and reported as
    warnings. An opening brace that is still unclosed when the input ends
    is a scan error.
    """
    placeholders: list[Placeholder] = []
    escapes: list[_Escape] = []
    warnings: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "{":
            if text.startswith("{{", i):
                escapes.append(_Escape("{", i, i + 2))
                i += 2
                continue
            j = i + 1
            while j < n and text[j] not in "{}\n":
                j += 1
            if j >= n:
                line, column = _location(text, i)
                raise ScanError(
                    f"unbalanced '{{' at end of input (line {line}, column {column}, offset {i})"
                )
            if text[j] == "}":
                interior = text[i + 1 : j]
                if _is_dot_path(interior):
                    placeholders.append(Placeholder(interior, i, j + 1))
                else:
                    line, column = _location(text, i)
                    warnings.append(
                        f"ignoring invalid placeholder {text[i:j + 1]!r} "
                        f"at line {line}, column {column}"
                    )
                i = j + 1
            elif text[j] == "{":
                line, column = _location(text, i)
                warnings.append(
                    f"ignoring unterminated '{{' at line {line}, column {column}"
                )
                i = j
            else:  # newline before any closing brace
                line, column = _location(text, i)
                warnings.append(
                    f"ignoring unterminated '{{' at line {line}, column {column}"
                )
                i = j + 1
        elif ch == "}" and text.startswith("}}", i):
            escapes.append(_Escape("}", i, i + 2))
            i += 2
        else:
            i += 1
    return TemplateDocument(
        body=text,
        placeholders=placeholders,
        warnings=warnings,
        source_path=str(source_path) if source_path is not None else None,
        _escapes=escapes,
    )


def scan_file(path: str | Path) -> TemplateDocument:
    path = Path(path)
    return scan(path.read_text(encoding="utf-8"), source_path=path)


def render(
    template: TemplateDocument,
    point: ExperimentPoint | None = None,
    spec: ExperimentSpec | None = None,
    env: Mapping[str, str] | None = None,
    db: Mapping[str, Scalar] | None = None,
    mode: str = MODE_STRICT,
) -> RenderResult:
    """Substitute every placeholder in a scanned template.

    Strict mode fails on the first unresolvable placeholder; lenient mode
    leaves the token verbatim and records a warning. Bytes outside
    placeholder and escape spans are never touched.
    """
    if mode not in (MODE_STRICT, MODE_LENIENT):
        raise ValueError(f"unknown render mode {mode!r}")
    spans: list[tuple[int, int, str, str]] = [
        (p.start, p.end, "placeholder", p.path) for p in template.placeholders
    ]
    spans.extend((e.start, e.end, "escape", e.literal) for e in template._escapes)
    spans.sort()

    parts: list[str] = []
    warnings: list[str] = []
    pos = 0
    for start, end, kind, payload in spans:
        parts.append(template.body[pos:start])
        if kind == "escape":
            parts.append(payload)
        else:
            try:
                parts.append(resolve_variable(payload, point, spec, env, db))
            except (UndefinedVariable, NotAScalar) as exc:
                if mode == MODE_STRICT:
                    line, column = _location(template.body, start)
                    origin = f" in {template.source_path}" if template.source_path else ""
                    raise RenderError(
                        f"cannot resolve {{{payload}}} at line {line}, column {column}"
                        f"{origin}: {exc}"
                    ) from exc
                parts.append(template.body[start:end])
                line, column = _location(template.body, start)
                warnings.append(
                    f"left {{{payload}}} unresolved at line {line}, column {column}: {exc}"
                )
        pos = end
    parts.append(template.body[pos:])
    return RenderResult(text="".join(parts), warnings=warnings)


def render_config(spec: ExperimentSpec, point: ExperimentPoint) -> str:
    """Emit the spec document with the experiment section pinned to one point.

    Every multi-valued experiment entry collapses to the point's scalar;
    everything else is preserved modulo canonical YAML re-serialization.
    The output parses back into a spec whose grid is exactly ``[point]``.
    """
    document = copy.deepcopy(spec.raw)
    section = document.get("experiment")
    if isinstance(section, Mapping):
        pinned = dict(section)
        for name, value in point.assignments.items():
            pinned[name] = value
        document["experiment"] = pinned
    return dump_yaml(document)
