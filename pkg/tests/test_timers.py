import csv
import io
import json
import re
from datetime import datetime, timedelta, timezone

import pytest
import yaml

from benchkit.errors import TimerError, ValidationError
from benchkit.gpuwatch import watch
from benchkit.sysinfo import SystemInfo, capture_system_info
from benchkit.timers import MLLOG_PREFIX, StopWatch

T0 = datetime(2025, 3, 1, 8, 0, 0, tzinfo=timezone.utc)

FIXED_SYSTEM = SystemInfo(
    os_name="Linux",
    os_version="6.1.0",
    hostname="node1",
    user="alice",
    cpu_model="TestCPU",
    cpu_count=8,
    total_mem_bytes=16_000_000_000,
    tool_version="0.1.0",
    captured_at="2025-03-01T08:00:00Z",
)


class FakeClock:
    def __init__(self, start=T0):
        self.now = start

    def __call__(self):
        return self.now

    def tick(self, seconds):
        self.now += timedelta(seconds=seconds)


@pytest.fixture
def two_instance_watch():
    clock = FakeClock()
    watch_ = StopWatch(clock=clock)
    watch_.start("epoch")
    clock.tick(1)
    watch_.stop("epoch")
    watch_.start("epoch")
    clock.tick(3)
    watch_.stop("epoch")
    return watch_


# -- timing ---------------------------------------------------------------------


def test_injected_clock_gives_exact_elapsed():
    clock = FakeClock()
    watch_ = StopWatch(clock=clock)
    watch_.start("load")
    clock.tick(2.000)
    event = watch_.stop("load")
    assert event.elapsed == 2.000


def test_two_instances_aggregate(two_instance_watch):
    (stats,) = two_instance_watch.summary()
    assert stats.count == 2
    assert stats.total == 4.0
    assert stats.mean == 2.0
    assert stats.min == 1.0
    assert stats.max == 3.0


def test_stop_without_start_is_error():
    with pytest.raises(TimerError, match="never"):
        StopWatch().stop("never")


def test_double_start_is_error():
    watch_ = StopWatch()
    watch_.start("x")
    with pytest.raises(TimerError, match="already running"):
        watch_.start("x")


def test_millisecond_resolution_totals_are_additive():
    clock = FakeClock()
    watch_ = StopWatch(clock=clock)
    steps = [0.001, 0.003, 0.007, 0.011]
    for step in steps:
        watch_.start("tiny")
        clock.tick(step)
        watch_.stop("tiny")
    (stats,) = watch_.summary()
    events = watch_.events(closed_only=True)
    assert stats.total == sum(e.elapsed for e in events)
    assert stats.count == len(steps)


# -- reports ----------------------------------------------------------------------


def _rows_from_csv(text):
    table = text.split("\r\n\r\n")[0]
    reader = csv.DictReader(io.StringIO(table))
    return {row["name"]: row for row in reader}


def _rows_from_txt(text):
    rows = {}
    lines = [line for line in text.splitlines() if line and not line.startswith("#")]
    header = lines[0].split()
    for line in lines[2:]:
        cells = line.split()
        rows[cells[0]] = dict(zip(header, cells))
    return rows


def _rows_from_html(text):
    rows = {}
    for match in re.finditer(r"<tr>((?:<td>.*?</td>)+)</tr>", text):
        cells = re.findall(r"<td>(.*?)</td>", match.group(1))
        if len(cells) == 8:
            rows[cells[0]] = {
                "name": cells[0], "count": cells[1], "total_s": cells[2], "mean_s": cells[3],
            }
    return rows


def test_all_five_formats_agree_on_count_total_mean(two_instance_watch):
    reports = {
        fmt: two_instance_watch.report(fmt, system=FIXED_SYSTEM)
        for fmt in ("txt", "csv", "json", "yaml", "html")
    }
    json_row = json.loads(reports["json"])["timers"][0]
    yaml_row = yaml.safe_load(reports["yaml"])["timers"][0]
    csv_row = _rows_from_csv(reports["csv"])["epoch"]
    txt_row = _rows_from_txt(reports["txt"])["epoch"]
    html_row = _rows_from_html(reports["html"])["epoch"]
    for row in (json_row, yaml_row):
        assert row["count"] == 2
        assert row["total_s"] == 4.0
        assert row["mean_s"] == 2.0
    for row in (csv_row, txt_row, html_row):
        assert int(row["count"]) == 2
        assert float(row["total_s"]) == 4.0
        assert float(row["mean_s"]) == 2.0


def test_json_report_round_trips_all_events(two_instance_watch):
    payload = json.loads(two_instance_watch.report("json", system=FIXED_SYSTEM))
    assert len(payload["events"]) == 2
    for event, original in zip(payload["events"], two_instance_watch.events()):
        assert event["name"] == original.name
        assert event["elapsed_s"] == original.elapsed
        assert event["start"] == "2025-03-01T08:00:00Z" or event["start"].startswith("2025-03-01")
    assert payload["system"] == FIXED_SYSTEM.to_dict()


def test_empty_watch_reports_header_plus_system():
    watch_ = StopWatch()
    report = watch_.report("csv", system=FIXED_SYSTEM)
    table, rest = report.split("\r\n\r\n", 1)
    assert table.splitlines()[0].startswith("name,count,total_s")
    assert len(table.splitlines()) == 1  # header only
    assert "hostname,node1" in rest.replace('"', "")


GOLDEN_TXT = """\
# system
#   os_name: Linux
#   os_version: 6.1.0
#   hostname: node1
#   user: alice
#   cpu_model: TestCPU
#   cpu_count: 8
#   total_mem_bytes: 16000000000
#   tool_version: 0.1.0
#   captured_at: 2025-03-01T08:00:00Z
name   count  total_s  mean_s  min_s  max_s  first_start           last_stop
-----  -----  -------  ------  -----  -----  --------------------  --------------------
epoch  2      4.000    2.000   1.000  3.000  2025-03-01T08:00:00Z  2025-03-01T08:00:04Z
"""


def test_txt_report_matches_golden(two_instance_watch):
    assert two_instance_watch.report("txt", system=FIXED_SYSTEM) == GOLDEN_TXT


def test_unknown_format_rejected(two_instance_watch):
    with pytest.raises(ValidationError):
        two_instance_watch.report("pdf")


# -- mllog -----------------------------------------------------------------------


def test_single_timer_yields_start_end_pair():
    clock = FakeClock()
    watch_ = StopWatch(clock=clock)
    watch_.start("train")
    clock.tick(2)
    watch_.stop("train")
    lines = watch_.mllog_export()
    assert len(lines) == 2
    start = json.loads(lines[0][len(MLLOG_PREFIX):])
    end = json.loads(lines[1][len(MLLOG_PREFIX):])
    assert start["event_type"] == "INTERVAL_START"
    assert end["event_type"] == "INTERVAL_END"
    assert end["time_ms"] - start["time_ms"] == 2000
    assert end["key"] == "train"
    assert end["value"] == 2.0


def test_every_mllog_line_is_json_after_prefix(two_instance_watch):
    for line in two_instance_watch.mllog_export({"namespace": "suite"}):
        assert line.startswith(MLLOG_PREFIX)
        payload = json.loads(line[len(MLLOG_PREFIX):])
        assert set(payload) == {"namespace", "time_ms", "event_type", "key", "value", "metadata"}
        assert payload["namespace"] == "suite"


def test_mllog_lines_ordered_by_time_across_timers():
    clock = FakeClock()
    watch_ = StopWatch(clock=clock)
    watch_.start("outer")
    clock.tick(1)
    watch_.start("inner")
    clock.tick(1)
    watch_.stop("inner")
    clock.tick(1)
    watch_.stop("outer")
    times = [
        json.loads(line[len(MLLOG_PREFIX):])["time_ms"] for line in watch_.mllog_export()
    ]
    assert times == sorted(times)  # sort-check oracle


# -- gpu sampling -----------------------------------------------------------------


class FakeTime:
    def __init__(self):
        self.now = 0.0

    def clock(self):
        return self.now

    def sleep(self, seconds):
        self.now += seconds


def test_constant_sampler_dense_emits_single_row():
    fake = FakeTime()
    rows = list(
        watch(
            sampler_command="echo '42, 1024, 150.0, 61'",
            delay_seconds=0.5,
            dense=True,
            duration_seconds=5.0,
            clock=fake.clock,
            sleep=fake.sleep,
        )
    )
    assert rows[0] == "ts,gpu,util_pct,mem_used,power_w,temp_c"
    assert len(rows) == 2  # header + one deduplicated sample
    assert rows[1].endswith(",0,42,1024,150.0,61")


def test_half_second_delay_over_two_seconds_gives_four_samples():
    fake = FakeTime()
    rows = list(
        watch(
            sampler_command="echo '42, 1024, 150.0, 61'",
            delay_seconds=0.5,
            duration_seconds=2.0,
            clock=fake.clock,
            sleep=fake.sleep,
        )
    )
    assert len(rows) - 1 == 4


def test_missing_sampler_fails_before_first_sample():
    with pytest.raises(ValidationError, match="not found"):
        list(watch(sampler_command="no_such_sampler_binary --flags"))


def test_sampler_failure_mid_run_yields_unknown_row():
    fake = FakeTime()
    rows = list(
        watch(
            sampler_command="false",
            delay_seconds=1.0,
            duration_seconds=2.0,
            clock=fake.clock,
            sleep=fake.sleep,
        )
    )
    assert len(rows) - 1 == 2
    assert rows[1].endswith(",0,unknown,unknown,unknown,unknown")


def test_capture_system_info_fills_every_field():
    info = capture_system_info()
    for value in info.to_dict().values():
        assert value not in (None, "")
