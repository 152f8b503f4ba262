"""Materialize one directory per experiment point.

For every point of the grid this writes ``<root>/<id>/`` holding the
instantiated batch script (``job.sh``), the pinned config
(``config.yaml``), and a provenance manifest, plus a machine-readable
``<root>/index.jsonl``. Generation is staged in a temporary directory and
moved into place, so a failure never leaves a partial output root.
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping

import yaml

from . import __version__
from .errors import GenerationError, PolicyError
from .schedulers.base import QueuePolicy
from .specmodel import (
    ExperimentPoint,
    ExperimentSpec,
    Scalar,
    expand_grid,
    experiment_id,
)
from .templates import MODE_STRICT, TemplateDocument, render, render_config
from .yamlio import dump_yaml

SCRIPT_NAME = "job.sh"
CONFIG_NAME = "config.yaml"
MANIFEST_NAME = "manifest.yaml"
INDEX_NAME = "index.jsonl"

__all__ = [
    "GeneratedExperiment",
    "GeneratedSet",
    "SubmissionBatch",
    "experiment_id",
    "generate",
    "load_generated_set",
    "split_for_policy",
]


@dataclass(frozen=True)
class GeneratedExperiment:
    point: ExperimentPoint
    dir: Path
    script_path: Path
    config_path: Path
    manifest: dict[str, str]


@dataclass(frozen=True)
class GeneratedSet:
    root: Path
    experiments: list[GeneratedExperiment]
    index_path: Path


@dataclass(frozen=True)
class SubmissionBatch:
    """One wave of independently submitted jobs, sized to queue policy."""

    ordinal: int
    experiments: list[GeneratedExperiment]


def spec_hash(spec: ExperimentSpec) -> str:
    canonical = json.dumps(spec.raw, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def template_hash(template: TemplateDocument) -> str:
    return hashlib.sha256(template.body.encode("utf-8")).hexdigest()


def _index_row(exp: GeneratedExperiment) -> dict:
    return {
        "id": exp.point.id,
        "ordinal": exp.point.ordinal,
        "assignments": exp.point.assignments,
        "dir": exp.point.id,
        "script": f"{exp.point.id}/{SCRIPT_NAME}",
        "config": f"{exp.point.id}/{CONFIG_NAME}",
    }


def _write_experiment(
    stage: Path,
    spec: ExperimentSpec,
    template: TemplateDocument,
    point: ExperimentPoint,
    env: Mapping[str, str] | None,
    db: Mapping[str, Scalar] | None,
    manifest: dict[str, str],
) -> GeneratedExperiment:
    exp_dir = stage / point.id
    exp_dir.mkdir()
    script = render(template, point, spec, env, db, mode=MODE_STRICT).text
    script_path = exp_dir / SCRIPT_NAME
    script_path.write_text(script, encoding="utf-8", newline="\n")
    os.chmod(script_path, 0o755)
    config_path = exp_dir / CONFIG_NAME
    config_path.write_text(render_config(spec, point), encoding="utf-8", newline="\n")
    (exp_dir / MANIFEST_NAME).write_text(dump_yaml(manifest), encoding="utf-8")
    return GeneratedExperiment(
        point=point,
        dir=exp_dir,
        script_path=script_path,
        config_path=config_path,
        manifest=dict(manifest),
    )


def _tree_digests(root: Path) -> dict[str, str]:
    """Per-file content hashes, with manifest creation timestamps masked out."""
    digests: dict[str, str] = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        data = path.read_bytes()
        if path.name == MANIFEST_NAME:
            try:
                doc = yaml.safe_load(data) or {}
            except yaml.YAMLError:
                doc = {"_unparsed": data.decode("utf-8", "replace")}
            doc.pop("created_at", None)
            data = json.dumps(doc, sort_keys=True, default=str).encode("utf-8")
        digests[rel] = hashlib.sha256(data).hexdigest()
    return digests


def _relocate(experiments: list[GeneratedExperiment], root: Path) -> list[GeneratedExperiment]:
    placed = []
    for exp in experiments:
        exp_dir = root / exp.point.id
        placed.append(
            GeneratedExperiment(
                point=exp.point,
                dir=exp_dir,
                script_path=exp_dir / SCRIPT_NAME,
                config_path=exp_dir / CONFIG_NAME,
                manifest=exp.manifest,
            )
        )
    return placed


def generate(
    spec: ExperimentSpec,
    template: TemplateDocument,
    out_root: str | Path,
    env: Mapping[str, str] | None = None,
    db: Mapping[str, Scalar] | None = None,
    force: bool = False,
    cap: int | None = None,
    clock: Callable[[], datetime] | None = None,
) -> GeneratedSet:
    """Create one directory per grid point under ``out_root``.

    Re-running with identical inputs leaves a byte-identical tree; if the
    existing tree differs (beyond manifest timestamps), generation refuses
    unless ``force`` is set.
    """
    out_root = Path(out_root)
    out_root.parent.mkdir(parents=True, exist_ok=True)
    if env is None:
        env = dict(os.environ)
    points = expand_grid(spec, cap=cap) if cap is not None else expand_grid(spec)
    now = (clock or (lambda: datetime.now(timezone.utc)))()
    manifest = {
        "spec_hash": spec_hash(spec),
        "template_hash": template_hash(template),
        "created_at": now.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "tool_version": __version__,
    }

    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out_root.parent))
    try:
        experiments = [
            _write_experiment(stage, spec, template, point, env, db, manifest)
            for point in points
        ]
        index_path = stage / INDEX_NAME
        with open(index_path, "w", encoding="utf-8") as handle:
            for exp in experiments:
                handle.write(json.dumps(_index_row(exp), sort_keys=True) + "\n")

        if not out_root.exists():
            os.replace(stage, out_root)
            return GeneratedSet(
                root=out_root,
                experiments=_relocate(experiments, out_root),
                index_path=out_root / INDEX_NAME,
            )

        if _tree_digests(out_root) == _tree_digests(stage):
            # Identical content: keep the existing tree (and its timestamps).
            shutil.rmtree(stage)
            return GeneratedSet(
                root=out_root,
                experiments=_relocate(experiments, out_root),
                index_path=out_root / INDEX_NAME,
            )
        if not force:
            shutil.rmtree(stage)
            raise GenerationError(
                f"{out_root} already contains differing experiments; "
                "re-run with --force to replace them"
            )
        shutil.rmtree(out_root)
        os.replace(stage, out_root)
        return GeneratedSet(
            root=out_root,
            experiments=_relocate(experiments, out_root),
            index_path=out_root / INDEX_NAME,
        )
    except Exception:
        if stage.exists():
            shutil.rmtree(stage, ignore_errors=True)
        raise


def load_generated_set(out_root: str | Path) -> GeneratedSet:
    """Rebuild a GeneratedSet from an output root's index file."""
    out_root = Path(out_root)
    index_path = out_root / INDEX_NAME
    if not index_path.is_file():
        raise GenerationError(f"{out_root} has no {INDEX_NAME}; run generate first")
    experiments = []
    for line in index_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        exp_dir = out_root / row["dir"]
        manifest_path = exp_dir / MANIFEST_NAME
        manifest = {}
        if manifest_path.is_file():
            manifest = yaml.safe_load(manifest_path.read_text(encoding="utf-8")) or {}
        experiments.append(
            GeneratedExperiment(
                point=ExperimentPoint(
                    assignments=row["assignments"], id=row["id"], ordinal=row["ordinal"]
                ),
                dir=exp_dir,
                script_path=out_root / row["script"],
                config_path=out_root / row["config"],
                manifest=manifest,
            )
        )
    return GeneratedSet(root=out_root, experiments=experiments, index_path=index_path)


def split_for_policy(
    generated: GeneratedSet,
    policy: QueuePolicy,
    wall_minutes: float | None = None,
) -> list[SubmissionBatch]:
    """Partition experiments into submission waves within queue policy.

    Each experiment stays its own job; batches preserve grid order and
    hold at most ``max_queued_jobs`` jobs. An experiment whose declared
    wall time exceeds the per-job cap cannot be submitted at all.
    """
    if (
        wall_minutes is not None
        and policy.max_wall_minutes is not None
        and wall_minutes > policy.max_wall_minutes
    ):
        raise PolicyError(
            f"declared wall time {wall_minutes} min exceeds the per-job cap of "
            f"{policy.max_wall_minutes} min; split the run into checkpoint-chained "
            "jobs that each fit the cap"
        )
    experiments = generated.experiments
    size = policy.max_queued_jobs or len(experiments) or 1
    batches = [
        SubmissionBatch(ordinal=i, experiments=list(experiments[start : start + size]))
        for i, start in enumerate(range(0, len(experiments), size))
    ]
    return batches
