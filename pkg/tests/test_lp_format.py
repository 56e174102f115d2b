from pathlib import Path

import pytest

from robust_fluidnet.discretization import uniform_grid
from robust_fluidnet.lp import (
    INF,
    LpFormatError,
    LpProblem,
    export_lp,
    format_lp,
    parse_lp,
    solve_lp,
)
from robust_fluidnet.robustize import build_robust_A
from robust_fluidnet.uncertainty import UncertaintySet


def sample_problem():
    p = LpProblem(name="sample")
    x = p.add_column("x", cost=1.0 / 3.0)
    y = p.add_column("y", lower=-INF, upper=2.5, cost=-2.0)
    z = p.add_column("z_0", lower=1.25, upper=1.25)
    w = p.add_column("w.1", lower=-INF, upper=INF, cost=0.1)
    p.add_row({x: 1.0, y: -0.7, z: 2.0}, ">=", -1.5, name="r1", tag="balance(k=2,n=3)")
    p.add_row({y: 1e-13, w: 1.0}, "=", 0.0, name="r2")
    p.add_row({x: 3.0, w: -1.0}, "<=", 4.2, name="cap_0_1", tag="capacity(i=0,n=1)")
    return p


def test_empty_problem():
    text = format_lp(LpProblem())
    assert "min: 0;" in text.splitlines()
    assert "bounds:" in text


def test_round_trip_is_exact():
    p = sample_problem()
    parsed = parse_lp(format_lp(p))
    assert parsed.model_dump() == p.model_dump()


def test_round_trip_through_file(tmp_path):
    p = sample_problem()
    path = export_lp(p, tmp_path / "sample.lp")
    parsed = parse_lp(Path(path))
    assert parsed.model_dump() == p.model_dump()
    assert solve_lp(parsed).objective == solve_lp(p).objective
    assert parse_lp(str(path)).model_dump() == p.model_dump()


def test_annotations_precede_rows():
    lines = format_lp(sample_problem()).splitlines()
    i = lines.index("/* balance(k=2,n=3) */")
    assert lines[i + 1].startswith("r1: ")
    assert lines[0] == "/* problem: sample */"


def test_robust_export_annotates_every_balance_row(criss_cross):
    N = 3
    rp = build_robust_A(
        criss_cross, UncertaintySet.box(3), uniform_grid(criss_cross.horizon, N)
    )
    text = format_lp(rp.lp)
    tags = [line for line in text.splitlines() if line.startswith("/* balance(")]
    assert len(tags) == criss_cross.num_buffers * N
    assert parse_lp(text).model_dump() == rp.lp.model_dump()


@pytest.mark.parametrize(
    "text",
    [
        "bounds:\n0.0 <= x <= inf;\n",
        "min: +1.0 x;\nbounds:\n",
        "min: +1.0 x;\nr1: +1.0 x >> 2.0;\nbounds:\n0.0 <= x <= inf;\n",
        "min: +abc x;\nbounds:\n0.0 <= x <= inf;\n",
        "min: 1.0 x;\nbounds:\n0.0 <= x <= inf;\n",
        "min: +1.0 x;\nbounds:\n0.0 <= x;\n",
    ],
)
def test_malformed_text(text):
    with pytest.raises(LpFormatError):
        parse_lp(text)


def test_duplicate_rows_rejected():
    text = (
        "min: +1.0 x;\n"
        "r1: +1.0 x >= 1.0;\n"
        "r1: +1.0 x <= 2.0;\n"
        "bounds:\n"
        "0.0 <= x <= inf;\n"
    )
    with pytest.raises(LpFormatError):
        parse_lp(text)
