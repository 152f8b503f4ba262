"""Hourly cluster cost model and benchmark run-cost projection.

A managed cluster bills one controller fee plus, per node, a management
fee and the instance price: ``hourly = C + N * (M + I)``. Run costs are
projected from average duration times repeat count at per-minute billing.
All arithmetic is exact decimal; rounding happens only at display time.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Any, Mapping

from .errors import BudgetError, CostError
from .yamlio import load_yaml

CENT = Decimal("0.01")

SIXTY = Decimal(60)


def as_money(value: Any, context: str) -> Decimal:
    """Convert a YAML scalar to an exact Decimal ('$1,234.50' included)."""
    if isinstance(value, Decimal):
        return value
    if isinstance(value, str):
        value = value.replace("$", "").replace(",", "").strip()
    try:
        result = Decimal(str(value))
    except (InvalidOperation, ValueError, TypeError):
        raise CostError(f"{context}: {value!r} is not a number") from None
    return result


@dataclass(frozen=True)
class CostScenario:
    """Cluster pricing inputs: controller fee, node count, per-node fees."""

    name: str
    controller_fee_per_hour: Decimal
    node_count: int
    node_mgmt_fee_per_hour: Decimal
    instance_cost_per_hour: Decimal
    gpus_per_node: int = 1

    def __post_init__(self):
        for label in ("controller_fee_per_hour", "node_mgmt_fee_per_hour", "instance_cost_per_hour"):
            if getattr(self, label) < 0:
                raise CostError(f"scenario {self.name!r}: {label} must be non-negative")
        if self.node_count < 0:
            raise CostError(f"scenario {self.name!r}: node_count must be non-negative")
        if self.gpus_per_node < 1:
            raise CostError(f"scenario {self.name!r}: gpus_per_node must be >= 1")


@dataclass(frozen=True)
class RunPlan:
    """A benchmark run: average duration, repeats, and where it runs."""

    name: str
    scenario: CostScenario
    avg_duration_minutes: Decimal
    repeats: int
    benchmark: str | None = None

    def __post_init__(self):
        if self.avg_duration_minutes <= 0:
            raise CostError(f"plan {self.name!r}: duration must be positive")
        if self.repeats < 1:
            raise CostError(f"plan {self.name!r}: repeats must be >= 1")


def hourly_cost(scenario: CostScenario) -> Decimal:
    """Exact hourly cluster cost: controller + nodes * (mgmt + instance)."""
    return scenario.controller_fee_per_hour + scenario.node_count * (
        scenario.node_mgmt_fee_per_hour + scenario.instance_cost_per_hour
    )


def per_gpu_hour(scenario: CostScenario) -> Decimal:
    """Hourly cost spread over every GPU in the cluster."""
    if scenario.node_count == 0:
        raise CostError(
            f"scenario {scenario.name!r}: per-GPU cost is undefined for an empty cluster"
        )
    return hourly_cost(scenario) / (scenario.node_count * scenario.gpus_per_node)


def total_minutes(plan: RunPlan) -> Decimal:
    return plan.avg_duration_minutes * plan.repeats


def run_cost(plan: RunPlan) -> Decimal:
    """Projected cost of all repeats at per-minute billing."""
    return hourly_cost(plan.scenario) * total_minutes(plan) / SIXTY


def display(amount: Decimal) -> str:
    return f"${amount.quantize(CENT):,}"


# -- file loading ----------------------------------------------------------


def _scenario_from_mapping(data: Mapping[str, Any]) -> CostScenario:
    required = (
        "controller_fee_per_hour",
        "node_count",
        "node_mgmt_fee_per_hour",
        "instance_cost_per_hour",
    )
    missing = [key for key in required if key not in data]
    if missing:
        raise CostError(f"scenario is missing fields: {', '.join(missing)}")
    name = str(data.get("name", "scenario"))
    return CostScenario(
        name=name,
        controller_fee_per_hour=as_money(data["controller_fee_per_hour"], f"{name}.controller_fee_per_hour"),
        node_count=int(data["node_count"]),
        node_mgmt_fee_per_hour=as_money(data["node_mgmt_fee_per_hour"], f"{name}.node_mgmt_fee_per_hour"),
        instance_cost_per_hour=as_money(data["instance_cost_per_hour"], f"{name}.instance_cost_per_hour"),
        gpus_per_node=int(data.get("gpus_per_node", 1)),
    )


def parse_scenarios(text: str) -> list[CostScenario]:
    """Parse a scenario file: one mapping, a list, or ``scenarios: [...]``."""
    document = load_yaml(text)
    if isinstance(document, Mapping) and "scenarios" in document:
        entries = document["scenarios"]
    elif isinstance(document, Mapping):
        entries = [document]
    else:
        entries = document
    if not isinstance(entries, list) or not entries:
        raise CostError("scenario file holds no scenarios")
    scenarios = [_scenario_from_mapping(entry) for entry in entries]
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise CostError("scenario names must be unique")
    return scenarios


def parse_plans(text: str, scenarios: list[CostScenario]) -> list[RunPlan]:
    """Parse a plan file; each plan names its scenario (optional when unique)."""
    document = load_yaml(text)
    if isinstance(document, Mapping) and "plans" in document:
        entries = document["plans"]
    elif isinstance(document, Mapping):
        entries = [document]
    else:
        entries = document
    if not isinstance(entries, list) or not entries:
        raise CostError("plan file holds no plans")
    by_name = {s.name: s for s in scenarios}
    plans = []
    for entry in entries:
        if not isinstance(entry, Mapping):
            raise CostError("each plan must be a mapping")
        name = str(entry.get("name", "plan"))
        ref = entry.get("scenario")
        if ref is None:
            if len(scenarios) != 1:
                raise CostError(
                    f"plan {name!r} names no scenario and {len(scenarios)} are loaded"
                )
            scenario = scenarios[0]
        else:
            if ref not in by_name:
                raise CostError(f"plan {name!r} references unknown scenario {ref!r}")
            scenario = by_name[ref]
        if "avg_duration_minutes" not in entry or "repeats" not in entry:
            raise CostError(f"plan {name!r} needs avg_duration_minutes and repeats")
        plans.append(
            RunPlan(
                name=name,
                scenario=scenario,
                avg_duration_minutes=as_money(entry["avg_duration_minutes"], f"{name}.avg_duration_minutes"),
                repeats=int(entry["repeats"]),
                benchmark=entry.get("benchmark"),
            )
        )
    return plans


@dataclass(frozen=True)
class Estimate:
    """The full cost report: per-scenario rates plus per-plan projections."""

    scenarios: list[CostScenario]
    plans: list[RunPlan]

    def scenario_rows(self) -> list[dict[str, Any]]:
        rows = []
        for scenario in self.scenarios:
            hourly = hourly_cost(scenario)
            rows.append(
                {
                    "scenario": scenario.name,
                    "nodes": scenario.node_count,
                    "gpus": scenario.node_count * scenario.gpus_per_node,
                    "instance_per_hour": str(scenario.instance_cost_per_hour),
                    "controller_per_hour": str(scenario.controller_fee_per_hour),
                    "mgmt_per_hour": str(scenario.node_mgmt_fee_per_hour),
                    "total_per_hour": str(hourly.quantize(CENT)),
                    "per_gpu_hour": (
                        str(per_gpu_hour(scenario).quantize(CENT))
                        if scenario.node_count else None
                    ),
                }
            )
        return rows

    def plan_rows(self) -> list[dict[str, Any]]:
        rows = []
        for plan in self.plans:
            rows.append(
                {
                    "plan": plan.name,
                    "benchmark": plan.benchmark or "-",
                    "scenario": plan.scenario.name,
                    "avg_minutes": str(plan.avg_duration_minutes),
                    "repeats": plan.repeats,
                    "total_minutes": str(total_minutes(plan)),
                    "projected_cost": str(run_cost(plan).quantize(CENT)),
                }
            )
        return rows

    def total_cost(self) -> Decimal:
        return sum((run_cost(plan) for plan in self.plans), Decimal(0))

    def check_budget(self, limit: Decimal | None):
        """Raise BudgetError when the projection exceeds the limit."""
        if limit is None:
            return
        if self.plans:
            cost = self.total_cost()
            label = "projected run cost"
        else:
            cost = max(hourly_cost(s) for s in self.scenarios)
            label = "hourly cost"
        if cost > limit:
            raise BudgetError(
                f"over budget: {label} {display(cost)} exceeds the limit {display(limit)}"
            )
