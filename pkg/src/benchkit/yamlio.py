"""Strict YAML loading shared by spec, workflow, and resource parsers.

PyYAML's safe loader silently keeps the last of two duplicate mapping
keys; experiment specs must reject that, so a checking loader is used.
"""
from __future__ import annotations

from typing import Any

import yaml

from .errors import SpecError


class _StrictLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader: _StrictLoader, node: yaml.MappingNode) -> dict:
    loader.flatten_mapping(node)
    mapping: dict = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in mapping:
            mark = key_node.start_mark
            raise SpecError(
                f"duplicate key {key!r} at line {mark.line + 1}, column {mark.column + 1}"
            )
        mapping[key] = loader.construct_object(value_node, deep=True)
    return mapping


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


def load_yaml(text: str) -> Any:
    """Parse a YAML document, rejecting duplicate keys.

    Raises SpecError with a line/column location on malformed input.
    """
    try:
        return yaml.load(text, Loader=_StrictLoader)
    except SpecError:
        raise
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            problem = getattr(exc, "problem", None) or str(exc)
            raise SpecError(
                f"invalid YAML at line {mark.line + 1}, column {mark.column + 1}: {problem}"
            ) from exc
        raise SpecError(f"invalid YAML: {exc}") from exc


def dump_yaml(document: Any) -> str:
    """Serialize a document in canonical block style, preserving key order."""
    return yaml.safe_dump(document, sort_keys=False, default_flow_style=False)
