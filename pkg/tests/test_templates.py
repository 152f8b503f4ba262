import textwrap

import pytest

from benchkit.errors import RenderError, ScanError
from benchkit.specmodel import expand_grid, parse_spec
from benchkit.templates import render, render_config, scan

from conftest import BATCH_TEMPLATE, GRID_SPEC, MALFORMED_TEMPLATE

ENV = {"USER": "alice"}


# -- scanning --------------------------------------------------------------


def test_scan_single_token():
    doc = scan("a {x.y} b")
    assert [(p.path, p.start, p.end) for p in doc.placeholders] == [("x.y", 2, 7)]
    assert doc.warnings == []


def test_scan_escapes_render_as_literal_braces():
    doc = scan("{{literal}}")
    assert doc.placeholders == []
    assert render(doc).text == "{literal}"


def test_scan_finds_reference_template_placeholders():
    doc = scan(BATCH_TEMPLATE)
    paths = {p.path for p in doc.placeholders}
    assert {"experiment.repeat", "application.name", "experiment.gpu", "os.USER"} <= paths


def test_scan_leaves_invalid_tokens_verbatim_with_warnings():
    doc = scan("x {0} y { x } z {a:-b}")
    assert doc.placeholders == []
    assert len(doc.warnings) == 3
    assert render(doc).text == "x {0} y { x } z {a:-b}"


def test_scan_malformed_nested_brace_keeps_inner_placeholder():
    doc = scan("-o {application.name/{experiment.repeat}-\n")
    assert [p.path for p in doc.placeholders] == ["experiment.repeat"]
    assert len(doc.warnings) == 1


def test_scan_unbalanced_brace_at_end_of_input_is_error():
    with pytest.raises(ScanError, match="offset 4"):
        scan("abc {x.y")


def test_scan_brace_before_newline_is_warning_not_error():
    doc = scan("abc {oops\ndef\n")
    assert doc.placeholders == []
    assert len(doc.warnings) == 1


# -- rendering --------------------------------------------------------------


def _reference():
    spec = parse_spec(GRID_SPEC)
    return spec, expand_grid(spec)


def test_render_joins_two_placeholders():
    spec, points = _reference()
    doc = scan("{experiment.gpu}-{application.name}")
    assert render(doc, points[0], spec, ENV).text == "a100-cloudmask"


def test_render_without_placeholders_is_byte_identical():
    body = "#!/bin/sh\necho plain $VAR ${SHELLVAR:-x}\n"
    doc = scan(body)
    assert render(doc).text == body


# Expected full render of the reference template for the first grid point,
# written out by hand from the substitution rules.
EXPECTED_FIRST_POINT_RENDER = textwrap.dedent(
    """\
    #!/bin/bash

    #SBATCH --job-name=1-cloudmask
    #SBATCH --nodes=1
    #SBATCH --gres=gpu:a100:1
    #SBATCH --time=02:00:00
    #SBATCH --mem=64G
    #SBATCH -o a100-cloudmask/1-%j.out
    #SBATCH --partition=gpu

    export USER_SCRATCH=/scratch/alice
    mkdir -p $USER_SCRATCH/a100-cloudmask/

    bench gpu watch --gpu=0 --delay=0.5 --dense > outputs/gpu0.log &

    python train.py --config config.yaml
    """
)


def test_render_matches_manual_substitution_of_reference_template():
    spec, points = _reference()
    doc = scan(BATCH_TEMPLATE)
    result = render(doc, points[0], spec, ENV)
    assert result.text == EXPECTED_FIRST_POINT_RENDER
    assert "--job-name=1-cloudmask" in result.text
    assert "--gres=gpu:a100:1" in result.text


def test_strict_render_is_total_over_reference_grid():
    spec, points = _reference()
    doc = scan(BATCH_TEMPLATE)
    for point in points:
        text = render(doc, point, spec, ENV).text
        assert "{experiment" not in text


def test_strict_render_failure_names_path_line_column():
    spec, points = _reference()
    doc = scan("line one\nrow {os.MISSING} here\n")
    with pytest.raises(RenderError, match=r"os\.MISSING.*line 2, column 5"):
        render(doc, points[0], spec, ENV, mode="strict")


def test_lenient_render_keeps_token_and_warns():
    spec, points = _reference()
    doc = scan("keep {db.version} going")
    result = render(doc, points[0], spec, ENV, mode="lenient")
    assert result.text == "keep {db.version} going"
    assert len(result.warnings) == 1


def test_malformed_template_still_renders_strict():
    # the broken line is a scan warning, not a placeholder, so strict
    # rendering of the remaining valid placeholders succeeds
    spec, points = _reference()
    doc = scan(MALFORMED_TEMPLATE)
    assert len(doc.warnings) == 1
    result = render(doc, points[0], spec, ENV, db={"version": "6.6"})
    assert "{application.name/" in result.text  # left verbatim
    assert "echo 6.6" in result.text


def test_render_touches_nothing_outside_spans():
    spec, points = _reference()
    body = "A{experiment.gpu}B{{C}}D snippet $X {bad token} E"
    doc = scan(body)
    result = render(doc, points[0], spec, ENV, mode="lenient").text
    assert result == "Aa100B{C}D snippet $X {bad token} E"


def test_scan_of_strict_output_finds_no_placeholders():
    spec, points = _reference()
    doc = scan(BATCH_TEMPLATE)
    for point in points[:6]:
        rendered = render(doc, point, spec, ENV).text
        assert scan(rendered).placeholders == []


# -- config instantiation ------------------------------------------------------


def test_render_config_pins_every_experiment_entry():
    spec, points = _reference()
    point = next(
        p for p in points
        if p.assignments == {"epoch": 30, "gpu": "v100", "repeat": 2}
    )
    text = render_config(spec, point)
    assert "epoch: 30" in text
    assert "gpu: v100" in text
    assert "repeat: 2" in text


def test_render_config_empty_experiment_is_canonical_identity():
    spec = parse_spec("application: {name: x}\n")
    point = expand_grid(spec)[0]
    import yaml

    assert render_config(spec, point) == yaml.safe_dump(
        spec.raw, sort_keys=False, default_flow_style=False
    )


def test_render_config_round_trips_every_grid_point():
    # generated config must re-parse to a one-point grid equal to its point
    spec, points = _reference()
    for point in points:
        text = render_config(spec, point)
        re_spec = parse_spec(text)
        re_points = expand_grid(re_spec)
        assert len(re_points) == 1
        assert re_points[0].assignments == point.assignments
        assert re_points[0].id == point.id
