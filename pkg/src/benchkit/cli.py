"""Command-line interface: the ``bench`` executable.

Subcommands map 1:1 onto the library: ``ee`` (grid generation and
submission), ``cc`` (workflow runs), ``results`` (repository merge and
query), ``cost`` (cluster estimates), ``gpu`` (sampling), plus small
utilities. Failures exit with a class-specific code: 2 usage, 3
validation, 4 transport, 5 policy, 6 over-budget.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .coordinator import Coordinator
from .costs import Estimate, as_money, parse_plans, parse_scenarios
from .errors import BenchError, UsageError, ValidationError
from .generator import generate, load_generated_set, split_for_policy
from .gpuwatch import watch
from .results import Repository, parse_predicate
from .schedulers import (
    AdapterPool,
    JobHandle,
    MockScheduler,
    QueuePolicy,
    TERMINAL_STATES,
)
from .schedulers.resources import load_resources
from .specmodel import parse_spec
from .status import parse_timestamp, read_latest, shell_helper
from .templates import scan_file
from .views import VIEW_FORMATS, export_view
from .workflow import parse_workflow_file
from .yamlio import load_yaml

logger = logging.getLogger(__name__)

HANDLES_NAME = "handles.jsonl"


# -- configuration resolution: flags > env (BENCH_*) > config file > default --


class CliConfig:
    def __init__(self, args: argparse.Namespace):
        self._args = args
        self._file: Mapping[str, Any] = {}
        config_path = getattr(args, "config", None) or os.environ.get("BENCH_CONFIG")
        if config_path:
            document = load_yaml(Path(config_path).read_text(encoding="utf-8"))
            if isinstance(document, Mapping):
                self._file = document

    def resolve(self, flag: Any, env_name: str | None, file_key: str, default: Any = None) -> Any:
        if flag is not None:
            return flag
        if env_name and os.environ.get(env_name):
            return os.environ[env_name]
        if file_key in self._file:
            return self._file[file_key]
        return default

    @property
    def resources_path(self) -> str | None:
        return self.resolve(getattr(self._args, "resources", None), "BENCH_RESOURCES", "resources")

    @property
    def out_root(self) -> str | None:
        return self.resolve(getattr(self._args, "out", None), "BENCH_OUT", "out")

    @property
    def color(self) -> bool:
        if getattr(self._args, "no_color", False) or os.environ.get("BENCH_NO_COLOR"):
            return False
        if self._file.get("no_color"):
            return False
        return sys.stdout.isatty()


def _emit(args: argparse.Namespace, payload: Any, text: str):
    if getattr(args, "format", None) == "json":
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _simple_table(header: tuple[str, ...], rows: list[tuple[str, ...]]) -> str:
    widths = [
        max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]
    def fmt(cells):
        return "  ".join(str(cell).ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    lines = [fmt(header), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def _build_pool(config: CliConfig, out_dir: Path | None = None) -> AdapterPool:
    # mock queues persist under the output root so separate invocations share them
    return AdapterPool(load_resources(config.resources_path), mock_state_dir=out_dir)


# -- ee -------------------------------------------------------------------


def cmd_ee_generate(args: argparse.Namespace) -> int:
    config = CliConfig(args)
    out = config.out_root
    if not out:
        raise UsageError("--out (or BENCH_OUT) is required")
    spec = parse_spec(Path(args.spec).read_text(encoding="utf-8"))
    template = scan_file(args.template)
    for warning in template.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    generated = generate(spec, template, out, force=args.force, cap=args.cap)
    count = len(generated.experiments)
    _emit(
        args,
        {"count": count, "root": str(generated.root), "index": str(generated.index_path)},
        f"{count} experiments generated under {generated.root}",
    )
    return 0


def _load_handles(out_dir: Path) -> list[dict]:
    path = out_dir / HANDLES_NAME
    if not path.is_file():
        raise ValidationError(f"{path} not found; submit first")
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def _handle_from_row(row: Mapping[str, Any]) -> JobHandle:
    return JobHandle(
        resource=row["resource"],
        native_id=row["native_id"],
        experiment_id=row["experiment_id"],
        submitted_at=parse_timestamp(row["submitted_at"]),
    )


def cmd_ee_submit(args: argparse.Namespace) -> int:
    config = CliConfig(args)
    out_dir = Path(args.out)
    generated = load_generated_set(out_dir)
    pool = _build_pool(config, out_dir=out_dir)
    adapter = pool.get(args.target)
    target = adapter.target

    policy = target.policy or QueuePolicy()
    if args.max_queued is not None:
        policy = dataclasses.replace(policy, max_queued_jobs=args.max_queued)
        adapter.target = dataclasses.replace(target, policy=policy)

    batches = split_for_policy(generated, policy, wall_minutes=args.wall_minutes)
    handles_path = out_dir / HANDLES_NAME
    submitted = 0
    with open(handles_path, "w", encoding="utf-8") as handles_file:
        for batch in batches:
            batch_handles = []
            for experiment in batch.experiments:
                handle = adapter.submit(
                    experiment.script_path, experiment.point.id, workdir=experiment.dir
                )
                batch_handles.append(handle)
                submitted += 1
                handles_file.write(
                    json.dumps(
                        {
                            "resource": handle.resource,
                            "native_id": handle.native_id,
                            "experiment_id": handle.experiment_id,
                            "submitted_at": handle.submitted_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
                            "dir": str(experiment.dir),
                        }
                    )
                    + "\n"
                )
            handles_file.flush()
            if batch.ordinal < len(batches) - 1:
                _drain(adapter, batch_handles, args.poll_interval)
    _emit(
        args,
        {"submitted": submitted, "batches": len(batches), "target": target.name,
         "handles": str(handles_path)},
        f"submitted {submitted} experiments in {len(batches)} batches to {target.name}",
    )
    return 0


def _drain(adapter, handles: list[JobHandle], poll_interval: float):
    """Block until every handle reaches a terminal state (queue-policy phasing)."""
    while True:
        states = [adapter.status(handle) for handle in handles]
        if all(state in TERMINAL_STATES for state in states):
            return
        if isinstance(adapter, MockScheduler):
            adapter.advance(1)
        else:
            time.sleep(poll_interval)


_STATE_COLORS = {"done": "32", "failed": "31", "cancelled": "33", "running": "36"}


def _paint(text: str, color: bool) -> str:
    code = _STATE_COLORS.get(text)
    if color and code:
        return f"\x1b[{code}m{text}\x1b[0m"
    return text


def cmd_ee_status(args: argparse.Namespace) -> int:
    config = CliConfig(args)
    out_dir = Path(args.out)
    rows = _load_handles(out_dir)
    pool = _build_pool(config, out_dir=out_dir)
    table_rows = []
    payload = []
    for row in rows:
        handle = _handle_from_row(row)
        adapter = pool.get(handle.resource)
        if row.get("dir") and hasattr(adapter, "attach_job"):
            adapter.attach_job(handle.native_id, row["dir"])
        state = adapter.status(handle).value
        record = read_latest(Path(row["dir"]) / "status.log") if row.get("dir") else None
        progress = str(record.progress) if record else "-"
        message = record.message if record else ""
        payload.append(
            {
                "experiment_id": handle.experiment_id,
                "state": state,
                "progress": record.progress if record else None,
                "message": message,
                "resource": handle.resource,
                "native_id": handle.native_id,
            }
        )
        table_rows.append(
            (
                handle.experiment_id,
                _paint(state, config.color and args.format != "json"),
                progress,
                message,
                handle.resource,
                handle.native_id,
            )
        )
    _emit(
        args,
        payload,
        _simple_table(
            ("experiment", "state", "progress", "message", "resource", "native_id"), table_rows
        ),
    )
    return 0


# -- cc -------------------------------------------------------------------


def _coordinator_from_args(args: argparse.Namespace, config: CliConfig) -> Coordinator:
    graph = parse_workflow_file(args.workflow)
    run_dir = args.run_dir or Path(args.workflow).resolve().parent / f"{Path(args.workflow).stem}.run"
    resources = load_resources(config.resources_path)
    return Coordinator(
        graph,
        run_dir=run_dir,
        resources=resources,
        mode=args.mode,
        width=getattr(args, "width", 4),
    )


def cmd_cc_run(args: argparse.Namespace) -> int:
    config = CliConfig(args)
    coordinator = _coordinator_from_args(args, config)
    ledger = coordinator.run()
    text = export_view(coordinator.graph, ledger, "table")
    _emit(args, ledger.to_dict(), text)
    if ledger.run_state != "done":
        raise BenchError(f"workflow {coordinator.graph.name!r} finished {ledger.run_state}")
    return 0


def cmd_cc_sync(args: argparse.Namespace) -> int:
    config = CliConfig(args)
    coordinator = _coordinator_from_args(args, config)
    ledger = coordinator.sync()
    _emit(args, ledger.to_dict(), export_view(coordinator.graph, ledger, "table"))
    return 0


def cmd_cc_view(args: argparse.Namespace) -> int:
    config = CliConfig(args)
    coordinator = _coordinator_from_args(args, config)
    ledger = coordinator.sync()
    text = export_view(coordinator.graph, ledger, args.format)
    if args.out_file:
        Path(args.out_file).write_text(text, encoding="utf-8")
        print(f"wrote {args.format} view to {args.out_file}")
    else:
        print(text, end="" if text.endswith("\n") else "\n")
    return 0


# -- results ----------------------------------------------------------------


def cmd_results_merge(args: argparse.Namespace) -> int:
    dest = Repository(args.into)
    source = Repository(args.source)
    report = dest.merge(source)
    _emit(args, report.to_dict(), report.to_yaml())
    return 0


def cmd_results_query(args: argparse.Namespace) -> int:
    repo = Repository(args.repo)
    predicates = [parse_predicate(text) for text in (args.where or [])]
    records = repo.query(predicates)
    payload = [record.to_dict() for record in records]
    rows = [
        (
            record.experiment_id,
            record.guid[:8],
            record.provenance.get("created_at", "-"),
            ", ".join(f"{k}={v}" for k, v in sorted(record.metrics.items())) or "-",
        )
        for record in records
    ]
    _emit(args, payload, _simple_table(("experiment", "guid", "created_at", "metrics"), rows))
    return 0


# -- cost ---------------------------------------------------------------------


def cmd_cost_estimate(args: argparse.Namespace) -> int:
    scenarios = parse_scenarios(Path(args.scenario).read_text(encoding="utf-8"))
    plans = []
    if args.plan:
        plans = parse_plans(Path(args.plan).read_text(encoding="utf-8"), scenarios)
    estimate = Estimate(scenarios=scenarios, plans=plans)
    limit = as_money(args.limit, "--limit") if args.limit is not None else None

    scenario_rows = estimate.scenario_rows()
    plan_rows = estimate.plan_rows()
    if args.format == "json":
        print(json.dumps({"scenarios": scenario_rows, "plans": plan_rows}, indent=2))
    elif args.format == "csv":
        lines = [",".join(scenario_rows[0].keys())] if scenario_rows else []
        lines += [",".join(str(v) for v in row.values()) for row in scenario_rows]
        if plan_rows:
            lines.append("")
            lines.append(",".join(plan_rows[0].keys()))
            lines += [",".join(str(v) for v in row.values()) for row in plan_rows]
        print("\n".join(lines))
    else:
        header = tuple(scenario_rows[0].keys())
        print(_simple_table(header, [tuple(str(v) for v in r.values()) for r in scenario_rows]))
        if plan_rows:
            print()
            header = tuple(plan_rows[0].keys())
            print(_simple_table(header, [tuple(str(v) for v in r.values()) for r in plan_rows]))
    estimate.check_budget(limit)
    return 0


# -- gpu ------------------------------------------------------------------------


def cmd_gpu_watch(args: argparse.Namespace) -> int:
    stream = watch(
        sampler_command=args.sampler,
        gpu_index=args.gpu,
        delay_seconds=args.delay,
        dense=args.dense,
        duration_seconds=args.duration,
    )
    sink = open(args.out_file, "a", encoding="utf-8") if args.out_file else sys.stdout
    try:
        for row in stream:
            if args.format == "json":
                fields = row.split(",")
                if fields and fields[0] != "ts":
                    keys = ("ts", "gpu", "util_pct", "mem_used", "power_w", "temp_c")
                    print(json.dumps(dict(zip(keys, fields))), file=sink, flush=True)
            else:
                print(row, file=sink, flush=True)
    except KeyboardInterrupt:
        pass  # cancellation is the normal way to stop a watch
    finally:
        if sink is not sys.stdout:
            sink.close()
    return 0


# -- utilities --------------------------------------------------------------------


def cmd_status_helper(args: argparse.Namespace) -> int:
    script = shell_helper()
    if args.out_file:
        Path(args.out_file).write_text(script, encoding="utf-8")
        print(f"wrote helper to {args.out_file}")
    else:
        _emit(args, {"script": script}, script)
    return 0


def cmd_mock_advance(args: argparse.Namespace) -> int:
    config = CliConfig(args)
    out_dir = Path(args.out)
    pool = _build_pool(config, out_dir=out_dir)
    adapter = pool.get(args.target)
    if not isinstance(adapter, MockScheduler):
        raise UsageError(f"resource {args.target!r} is not a mock scheduler")
    adapter.advance(args.ticks)
    live = adapter.live_jobs()
    _emit(
        args,
        {"target": args.target, "tick": adapter.tick, "live_jobs": live},
        f"advanced {args.target} to tick {adapter.tick} ({live} live jobs)",
    )
    return 0


# -- parser -------------------------------------------------------------------------


def _add_format(parser: argparse.ArgumentParser, choices=("table", "json")):
    parser.add_argument("--format", choices=choices, default=choices[0], help="output format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Grid-sweep experiment generation, workflow execution, and benchmark reporting.",
    )
    parser.add_argument("--version", action="version", version=f"bench {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="increase log detail")
    parser.add_argument("--no-color", action="store_true", help="disable ANSI colors")
    parser.add_argument("--config", help="config file (also BENCH_CONFIG)")
    commands = parser.add_subparsers(dest="command", required=True)

    # ee
    ee = commands.add_parser("ee", help="experiment grid generation and submission")
    ee_sub = ee.add_subparsers(dest="subcommand", required=True)

    gen = ee_sub.add_parser("generate", help="materialize one directory per grid point")
    gen.add_argument("--spec", required=True, help="experiment spec YAML")
    gen.add_argument("--template", required=True, help="batch script template")
    gen.add_argument("--out", help="output root (also BENCH_OUT)")
    gen.add_argument("--force", action="store_true", help="replace differing output")
    gen.add_argument("--cap", type=int, default=None, help="grid size cap (default 100000)")
    _add_format(gen)
    gen.set_defaults(func=cmd_ee_generate)

    sub = ee_sub.add_parser("submit", help="submit generated experiments to a resource")
    sub.add_argument("--out", required=True, help="generated output root")
    sub.add_argument("--target", required=True, help="resource name")
    sub.add_argument("--resources", help="resources YAML (also BENCH_RESOURCES)")
    sub.add_argument("--max-queued", type=int, default=None, help="override max queued jobs")
    sub.add_argument("--wall-minutes", type=float, default=None, help="declared wall time per experiment")
    sub.add_argument("--poll-interval", type=float, default=0.5, help="seconds between polls")
    _add_format(sub)
    sub.set_defaults(func=cmd_ee_submit)

    stat = ee_sub.add_parser("status", help="poll every submitted handle")
    stat.add_argument("--out", required=True, help="generated output root")
    stat.add_argument("--resources", help="resources YAML (also BENCH_RESOURCES)")
    _add_format(stat)
    stat.set_defaults(func=cmd_ee_status)

    # cc
    cc = commands.add_parser("cc", help="workflow DAG execution")
    cc_sub = cc.add_subparsers(dest="subcommand", required=True)

    run_p = cc_sub.add_parser("run", help="execute a workflow")
    run_p.add_argument("--workflow", required=True, help="workflow YAML")
    run_p.add_argument("--width", type=int, default=4, help="max concurrent nodes")
    run_p.add_argument("--run-dir", default=None, help="run directory (default <workflow>.run)")
    run_p.add_argument("--resources", help="resources YAML")
    run_p.add_argument("--mode", choices=("local", "distributed"), default="local")
    _add_format(run_p)
    run_p.set_defaults(func=cmd_cc_run)

    sync_p = cc_sub.add_parser("sync", help="rebuild run state from status files")
    sync_p.add_argument("--workflow", required=True)
    sync_p.add_argument("--run-dir", default=None)
    sync_p.add_argument("--resources", help="resources YAML")
    sync_p.add_argument("--mode", choices=("local", "distributed"), default="local")
    _add_format(sync_p)
    sync_p.set_defaults(func=cmd_cc_sync)

    view_p = cc_sub.add_parser("view", help="render the run as table/dot/html/log")
    view_p.add_argument("--workflow", required=True)
    view_p.add_argument("--run-dir", default=None)
    view_p.add_argument("--resources", help="resources YAML")
    view_p.add_argument("--mode", choices=("local", "distributed"), default="local")
    view_p.add_argument("--format", choices=VIEW_FORMATS + ("json",), default="table")
    view_p.add_argument("--out", dest="out_file", default=None, help="write view to a file")
    view_p.set_defaults(func=cmd_cc_view)

    # results
    results_p = commands.add_parser("results", help="result repository operations")
    results_sub = results_p.add_subparsers(dest="subcommand", required=True)

    merge_p = results_sub.add_parser("merge", help="merge one repository into another")
    merge_p.add_argument("--into", required=True, help="destination repository root")
    merge_p.add_argument("--from", dest="source", required=True, help="source repository root")
    _add_format(merge_p, choices=("yaml", "json"))
    merge_p.set_defaults(func=cmd_results_merge)

    query_p = results_sub.add_parser("query", help="filter records by parameter predicates")
    query_p.add_argument("--repo", required=True, help="repository root")
    query_p.add_argument(
        "--where", action="append", default=[],
        help="predicate: k=v, k=lo..hi, k>=n, k<=n (repeatable)",
    )
    _add_format(query_p)
    query_p.set_defaults(func=cmd_results_query)

    # cost
    cost_p = commands.add_parser("cost", help="cluster cost estimation")
    cost_sub = cost_p.add_subparsers(dest="subcommand", required=True)
    est = cost_sub.add_parser("estimate", help="hourly rates and projected run costs")
    est.add_argument("--scenario", required=True, help="scenario YAML")
    est.add_argument("--plan", default=None, help="run plan YAML")
    est.add_argument("--limit", default=None, help="budget limit in dollars")
    est.add_argument("--format", choices=("table", "csv", "json"), default="table")
    est.set_defaults(func=cmd_cost_estimate)

    # gpu
    gpu_p = commands.add_parser("gpu", help="GPU monitoring")
    gpu_sub = gpu_p.add_subparsers(dest="subcommand", required=True)
    watch_p = gpu_sub.add_parser("watch", help="sample GPU metrics periodically")
    watch_p.add_argument("--gpu", type=int, default=0, help="GPU index")
    watch_p.add_argument("--delay", type=float, default=0.5, help="seconds between samples")
    watch_p.add_argument("--dense", action="store_true", help="drop unchanged rows")
    watch_p.add_argument("--sampler", default=None, help="override the sampler command")
    watch_p.add_argument("--out", dest="out_file", default=None, help="append rows to a file")
    watch_p.add_argument("--duration", type=float, default=None, help="stop after N seconds")
    watch_p.add_argument("--format", choices=("csv", "json"), default="csv")
    watch_p.set_defaults(func=cmd_gpu_watch)

    # status utilities
    status_p = commands.add_parser("status", help="status protocol utilities")
    status_sub = status_p.add_subparsers(dest="subcommand", required=True)
    helper_p = status_sub.add_parser("helper", help="print the shell reporting helper")
    helper_p.add_argument("--out", dest="out_file", default=None)
    _add_format(helper_p, choices=("text", "json"))
    helper_p.set_defaults(func=cmd_status_helper)

    # mock clock
    mock_p = commands.add_parser("mock", help="mock scheduler utilities")
    mock_sub = mock_p.add_subparsers(dest="subcommand", required=True)
    adv = mock_sub.add_parser("advance", help="advance a mock scheduler's clock")
    adv.add_argument("--target", required=True)
    adv.add_argument("--out", required=True, help="output root holding the mock state")
    adv.add_argument("--ticks", type=int, default=1)
    adv.add_argument("--resources", help="resources YAML")
    _add_format(adv)
    adv.set_defaults(func=cmd_mock_advance)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - min(args.verbose, 2) * 10
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except BrokenPipeError:
        return 0
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
