import hashlib
import json
from pathlib import Path

import pytest
import yaml

from benchkit.errors import GenerationError, PolicyError, RenderError
from benchkit.generator import (
    generate,
    load_generated_set,
    split_for_policy,
)
from benchkit.schedulers import QueuePolicy
from benchkit.specmodel import expand_grid, parse_spec
from benchkit.templates import scan

from conftest import BATCH_TEMPLATE, GRID_SPEC

ENV = {"USER": "alice"}


def tree_hash(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(path.relative_to(root).as_posix().encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


@pytest.fixture
def generated(tmp_path):
    spec = parse_spec(GRID_SPEC)
    template = scan(BATCH_TEMPLATE)
    return generate(spec, template, tmp_path / "out", env=ENV)


def test_generate_creates_thirty_directories_in_grid_order(generated):
    assert len(generated.experiments) == 30
    assert generated.experiments[0].dir.name == "epoch_1-gpu_a100-repeat_1"
    names = [e.dir.name for e in generated.experiments]
    assert names == [p.id for p in expand_grid(parse_spec(GRID_SPEC))]
    for experiment in generated.experiments:
        assert experiment.script_path.is_file()
        assert experiment.config_path.is_file()
        assert (experiment.dir / "manifest.yaml").is_file()


def test_generated_script_contains_substituted_values(generated):
    script = generated.experiments[0].script_path.read_text()
    assert "--gres=gpu:a100:1" in script
    assert "1-cloudmask" in script
    assert generated.experiments[0].script_path.stat().st_mode & 0o755 == 0o755


def test_every_generated_config_reparses_to_its_single_point(generated):
    for experiment in generated.experiments:
        re_spec = parse_spec(experiment.config_path.read_text())
        re_points = expand_grid(re_spec)
        assert len(re_points) == 1
        assert re_points[0].assignments == experiment.point.assignments


def test_index_lists_every_experiment_exactly_once(generated):
    rows = [
        json.loads(line)
        for line in generated.index_path.read_text().splitlines()
        if line.strip()
    ]
    assert len(rows) == 30
    assert [r["id"] for r in rows] == [e.point.id for e in generated.experiments]
    assert [r["ordinal"] for r in rows] == list(range(30))


def test_manifest_carries_provenance(generated):
    manifest = yaml.safe_load((generated.experiments[0].dir / "manifest.yaml").read_text())
    assert set(manifest) == {"spec_hash", "template_hash", "created_at", "tool_version"}
    assert len(manifest["spec_hash"]) == 64


def test_regeneration_is_byte_identical(tmp_path):
    spec = parse_spec(GRID_SPEC)
    template = scan(BATCH_TEMPLATE)
    root = tmp_path / "out"
    generate(spec, template, root, env=ENV)
    first = tree_hash(root)
    generate(spec, template, root, env=ENV)
    assert tree_hash(root) == first


def test_differing_rerun_refuses_without_force(tmp_path, generated):
    other = parse_spec(GRID_SPEC.replace("cloudmask", "quakes"))
    template = scan(BATCH_TEMPLATE)
    with pytest.raises(GenerationError, match="--force"):
        generate(other, template, generated.root, env=ENV)
    # tree unchanged by the refusal
    assert generated.experiments[0].script_path.read_text().count("cloudmask") > 0
    replaced = generate(other, template, generated.root, env=ENV, force=True)
    assert "quakes" in replaced.experiments[0].script_path.read_text()


def test_failed_generation_leaves_no_output(tmp_path):
    spec = parse_spec(GRID_SPEC)
    template = scan(BATCH_TEMPLATE + "echo {os.NO_SUCH_VARIABLE}\n")
    root = tmp_path / "out"
    with pytest.raises(RenderError):
        generate(spec, template, root, env=ENV)
    assert not root.exists()
    assert list(tmp_path.iterdir()) == []  # staging fully cleaned up


def test_single_point_spec_generates_default_directory(tmp_path):
    spec = parse_spec("application: {name: x}\n")
    generated = generate(spec, scan("#!/bin/sh\necho {application.name}\n"), tmp_path / "out")
    assert [e.dir.name for e in generated.experiments] == ["default"]


def test_load_generated_set_round_trips(generated):
    loaded = load_generated_set(generated.root)
    assert [e.point for e in loaded.experiments] == [e.point for e in generated.experiments]


# -- policy splitting ------------------------------------------------------------


def _batch_oracle(total: int, max_queued: int) -> list[int]:
    """Brute-force packer: walk the list, close a batch at the queue cap."""
    sizes, current = [], 0
    for _ in range(total):
        current += 1
        if current == max_queued:
            sizes.append(current)
            current = 0
    if current:
        sizes.append(current)
    return sizes


def test_thirty_experiments_max_ten_gives_three_batches(generated):
    batches = split_for_policy(generated, QueuePolicy(max_queued_jobs=10))
    assert [len(b.experiments) for b in batches] == [10, 10, 10] == _batch_oracle(30, 10)
    flattened = [e.point.id for b in batches for e in b.experiments]
    assert flattened == [e.point.id for e in generated.experiments]


def test_large_queue_cap_gives_single_batch(generated):
    batches = split_for_policy(generated, QueuePolicy(max_queued_jobs=64))
    assert [len(b.experiments) for b in batches] == [30]


def test_five_ninety_minute_jobs_under_caps(tmp_path):
    spec = parse_spec("application: {name: x}\nexperiment: {trial: [1,2,3,4,5]}\n")
    generated = generate(spec, scan("#!/bin/sh\n"), tmp_path / "five")
    policy = QueuePolicy(max_queued_jobs=2, max_wall_minutes=120)
    batches = split_for_policy(generated, policy, wall_minutes=90)
    assert [len(b.experiments) for b in batches] == [2, 2, 1] == _batch_oracle(5, 2)


def test_wall_time_over_cap_instructs_checkpoint_chaining(generated):
    policy = QueuePolicy(max_queued_jobs=2, max_wall_minutes=120)
    with pytest.raises(PolicyError, match="checkpoint"):
        split_for_policy(generated, policy, wall_minutes=150)
