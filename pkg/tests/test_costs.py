import random
from decimal import Decimal

import pytest

from benchkit.errors import BudgetError, CostError
from benchkit.costs import (
    CostScenario,
    Estimate,
    RunPlan,
    hourly_cost,
    parse_plans,
    parse_scenarios,
    per_gpu_hour,
    run_cost,
    total_minutes,
)


def scenario(name, controller, nodes, mgmt="0.67", instance="32.77", gpus=8):
    return CostScenario(
        name=name,
        controller_fee_per_hour=Decimal(controller),
        node_count=nodes,
        node_mgmt_fee_per_hour=Decimal(mgmt),
        instance_cost_per_hour=Decimal(instance),
        gpus_per_node=gpus,
    )


SMALL = scenario("small", "0.60", 64)
MEDIUM = scenario("medium", "3.34", 128)
LARGE = scenario("large", "6.71", 256)


# -- hourly cost -------------------------------------------------------------


@pytest.mark.parametrize(
    "case,expected_total,expected_exact",
    [
        (SMALL, Decimal(2140), Decimal("2140.76")),
        (MEDIUM, Decimal(4283), Decimal("4283.66")),
        (LARGE, Decimal(8567), Decimal("8567.35")),
    ],
)
def test_hourly_totals_reproduce_reference_rows(case, expected_total, expected_exact):
    value = hourly_cost(case)
    assert value == expected_exact  # decimal arithmetic is exact
    assert abs(value - expected_total) <= 1


def test_empty_cluster_costs_only_the_controller():
    empty = scenario("none", "0.60", 0)
    assert hourly_cost(empty) == Decimal("0.60")


@pytest.mark.parametrize("case", [SMALL, MEDIUM, LARGE])
def test_per_gpu_hour_is_about_4_18(case):
    assert abs(per_gpu_hour(case) - Decimal("4.18")) <= Decimal("0.01")


def test_per_gpu_hour_zero_node_cluster_is_an_error():
    with pytest.raises(CostError, match="empty cluster"):
        per_gpu_hour(scenario("none", "0.60", 0))


def test_per_gpu_hour_degenerate_free_cluster():
    free = scenario("free", "0", 1, mgmt="0", instance="0", gpus=1)
    assert per_gpu_hour(free) == 0


# -- run cost ------------------------------------------------------------------


@pytest.mark.parametrize(
    "case,minutes,repeats,expected",
    [
        (SMALL, "2.65", 5, Decimal(473)),
        (MEDIUM, "8.04", 10, Decimal(5740)),
        (LARGE, "1.67", 5, Decimal(1192)),
    ],
)
def test_projected_run_costs_reproduce_reference_rows(case, minutes, repeats, expected):
    plan = RunPlan(
        name="bench", scenario=case, avg_duration_minutes=Decimal(minutes), repeats=repeats
    )
    assert abs(run_cost(plan) - expected) <= 1


def test_total_minutes_is_duration_times_repeats():
    plan = RunPlan(
        name="b", scenario=SMALL, avg_duration_minutes=Decimal("2.65"), repeats=5
    )
    assert total_minutes(plan) == Decimal("13.25")


def test_hourly_cost_is_linear_in_node_count():
    rng = random.Random(5)
    for _ in range(50):
        controller = Decimal(rng.randint(0, 1000)) / 100
        mgmt = Decimal(rng.randint(0, 500)) / 100
        instance = Decimal(rng.randint(0, 10000)) / 100
        n1, n2 = rng.randint(0, 512), rng.randint(0, 512)
        s1 = CostScenario("s1", controller, n1, mgmt, instance)
        s2 = CostScenario("s2", controller, n2, mgmt, instance)
        slope = mgmt + instance
        assert hourly_cost(s1) - hourly_cost(s2) == slope * (n1 - n2)
        assert hourly_cost(CostScenario("s0", controller, 0, mgmt, instance)) == controller


def test_run_cost_is_linear_in_repeats():
    cent = Decimal("0.01")
    rng = random.Random(6)
    for _ in range(50):
        repeats = rng.randint(1, 40)
        # durations that are whole hours divide by 60 exactly: exact linearity
        minutes = Decimal(60 * rng.randint(1, 10))
        single = run_cost(RunPlan("p", SMALL, minutes, 1))
        many = run_cost(RunPlan("p", SMALL, minutes, repeats))
        assert many == single * repeats
        # arbitrary durations: linear at display (cent) precision
        minutes = Decimal(rng.randint(1, 6000)) / 100
        single = run_cost(RunPlan("p", SMALL, minutes, 1))
        many = run_cost(RunPlan("p", SMALL, minutes, repeats))
        assert many.quantize(cent) == (single * repeats).quantize(cent)


def test_negative_inputs_rejected():
    with pytest.raises(CostError):
        scenario("bad", "-1", 4)
    with pytest.raises(CostError):
        RunPlan("bad", SMALL, Decimal("-5"), 1)
    with pytest.raises(CostError):
        RunPlan("bad", SMALL, Decimal("5"), 0)


# -- file parsing and budget gate ---------------------------------------------------


SCENARIO_YAML = """\
scenarios:
  - name: small
    controller_fee_per_hour: 0.60
    node_count: 64
    node_mgmt_fee_per_hour: 0.67
    instance_cost_per_hour: 32.77
    gpus_per_node: 8
  - name: medium
    controller_fee_per_hour: 3.34
    node_count: 128
    node_mgmt_fee_per_hour: 0.67
    instance_cost_per_hour: 32.77
    gpus_per_node: 8
  - name: large
    controller_fee_per_hour: 6.71
    node_count: 256
    node_mgmt_fee_per_hour: 0.67
    instance_cost_per_hour: 32.77
    gpus_per_node: 8
"""

PLAN_YAML = """\
plans:
  - name: run-a
    scenario: small
    benchmark: DeepCAM
    avg_duration_minutes: 2.65
    repeats: 5
"""


def test_yaml_floats_parse_to_exact_decimals():
    scenarios = parse_scenarios(SCENARIO_YAML)
    assert scenarios[0].instance_cost_per_hour == Decimal("32.77")
    assert hourly_cost(scenarios[0]) == Decimal("2140.76")


def test_three_scenario_batch_reproduces_reference_table():
    estimate = Estimate(scenarios=parse_scenarios(SCENARIO_YAML), plans=[])
    rows = estimate.scenario_rows()
    assert [row["total_per_hour"] for row in rows] == ["2140.76", "4283.66", "8567.35"]
    assert all(row["per_gpu_hour"] == "4.18" for row in rows)


def test_plan_resolves_named_scenario():
    scenarios = parse_scenarios(SCENARIO_YAML)
    (plan,) = parse_plans(PLAN_YAML, scenarios)
    assert plan.scenario.name == "small"
    assert abs(run_cost(plan) - 473) <= 1


def test_budget_gate_passes_under_limit():
    scenarios = parse_scenarios(SCENARIO_YAML)
    plans = parse_plans(PLAN_YAML, scenarios)
    Estimate(scenarios=scenarios, plans=plans).check_budget(Decimal(500))


def test_budget_gate_raises_over_limit():
    scenarios = parse_scenarios(SCENARIO_YAML)
    plans = parse_plans(PLAN_YAML, scenarios)
    with pytest.raises(BudgetError, match="over budget"):
        Estimate(scenarios=scenarios, plans=plans).check_budget(Decimal(400))


def test_dollar_strings_accepted():
    scenarios = parse_scenarios(
        "name: s\ncontroller_fee_per_hour: '$0.60'\nnode_count: 64\n"
        "node_mgmt_fee_per_hour: '$0.67'\ninstance_cost_per_hour: '$32.77'\n"
    )
    assert hourly_cost(scenarios[0]) == Decimal("2140.76")


def test_unknown_scenario_reference_rejected():
    with pytest.raises(CostError, match="unknown scenario"):
        parse_plans(
            "plans:\n  - {name: p, scenario: ghost, avg_duration_minutes: 1, repeats: 1}\n",
            parse_scenarios(SCENARIO_YAML),
        )
