"""Shared fixtures: the reference 3x2x5 grid, a batch template, workflows."""
from __future__ import annotations

import textwrap
from pathlib import Path

import pytest

from benchkit.schedulers import QueuePolicy, ResourceTarget
from benchkit.schedulers.mock import MockScheduler
from benchkit.schedulers.resources import AdapterPool, BUILTIN_TARGETS

#: Reference spec: 3 epochs x 2 gpus x 5 repeats = 30 points.
GRID_SPEC = textwrap.dedent(
    """\
    application:
      name: cloudmask
    data: "/scratch/{os.USER}/{application.name}"
    experiment:
      epoch: "1,30,60"
      gpu: "a100,v100"
      repeat: "1,2,3,4,5"
    """
)

#: Batch template exercising every placeholder namespace the grid uses.
BATCH_TEMPLATE = textwrap.dedent(
    """\
    #!/bin/bash

    #SBATCH --job-name={experiment.repeat}-{application.name}
    #SBATCH --nodes=1
    #SBATCH --gres=gpu:{experiment.gpu}:1
    #SBATCH --time=02:00:00
    #SBATCH --mem=64G
    #SBATCH -o {experiment.gpu}-{application.name}/{experiment.repeat}-%j.out
    #SBATCH --partition=gpu

    export USER_SCRATCH=/scratch/{os.USER}
    mkdir -p $USER_SCRATCH/{experiment.gpu}-{application.name}/

    bench gpu watch --gpu=0 --delay=0.5 --dense > outputs/gpu0.log &

    python train.py --config config.yaml
    """
)

#: Same template with a broken placeholder line, as real templates ship with.
MALFORMED_TEMPLATE = BATCH_TEMPLATE + textwrap.dedent(
    """\
    #SBATCH -o {experiment.gpu}-{application.name/{experiment.repeat}-
    echo {db.version}
    """
)


_CHAIN_TEMPLATE = textwrap.dedent(
    """\
    workflow:
      name: pipeline
      nodes:
        start:
          name: start{res}
        fetch-data:
          user: alice
          host: localhost
          status: ready
          label: '{{name}}\\nprogress={{progress}}'
          script: fetch-data.sh{res}
        compute:
          script: compute.sh{res}
        analyze:
          script: analyze.sh{res}
        end:
          name: end{res}
      dependencies:
        - start,fetch-data,compute,analyze,end
    """
)


def chain_workflow(resource: str | None = "sim") -> str:
    """Five-node chain start -> fetch-data -> compute -> analyze -> end."""
    res = f"\n      resource: {resource}" if resource else ""
    return _CHAIN_TEMPLATE.format(res=res)


CHAIN_SCRIPTS = ("fetch-data.sh", "compute.sh", "analyze.sh")


def write_chain_scripts(directory: Path, failing: str | None = None):
    for name in CHAIN_SCRIPTS:
        code = 1 if failing and name.startswith(failing) else 0
        (directory / name).write_text(f"#!/bin/sh\nexit {code}\n", encoding="utf-8")


def mock_pool(
    width: int = 1,
    default_ticks: int = 1,
    ticks: dict[str, int] | None = None,
    fail: set[str] | None = None,
    policy: QueuePolicy | None = None,
    name: str = "sim",
) -> AdapterPool:
    """Adapter pool with one preconfigured mock target."""
    target = ResourceTarget(name=name, kind="mock", policy=policy)
    pool = AdapterPool({**BUILTIN_TARGETS, name: target})
    mock = MockScheduler(target, width=width, default_ticks=default_ticks)
    for experiment_id, duration in (ticks or {}).items():
        mock.set_job_profile(experiment_id, ticks=duration)
    for experiment_id in fail or ():
        mock.set_job_profile(experiment_id, fail=True)
    pool.register(mock)
    return pool


@pytest.fixture
def grid_spec_text() -> str:
    return GRID_SPEC


@pytest.fixture
def batch_template_text() -> str:
    return BATCH_TEMPLATE
