import numpy as np
import pytest
from pydantic import ValidationError

from robust_fluidnet.discretization import (
    DiscretizationError,
    PiecewiseControl,
    TimeGrid,
    control_from_csv,
    control_to_csv,
    cumulative_integrals,
    effort_violations,
    evaluate_at,
    interval_index,
    uniform_grid,
)


def test_uniform_grid_examples():
    assert uniform_grid(1.0, 4).breakpoints == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert uniform_grid(2.0, 1).breakpoints == [0.0, 2.0]
    for N in (1, 3, 16):
        grid = uniform_grid(5.0, N)
        assert len(grid.breakpoints) == N + 1
        assert grid.horizon == 5.0
    with pytest.raises(DiscretizationError):
        uniform_grid(1.0, 0)
    with pytest.raises(DiscretizationError):
        uniform_grid(0.0, 2)


def test_grid_validation():
    with pytest.raises(ValidationError):
        TimeGrid(breakpoints=[0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValidationError):
        TimeGrid(breakpoints=[0.1, 1.0])
    with pytest.raises(DiscretizationError):
        uniform_grid(1.0, 2).check_horizon(2.0)


def test_cumulative_examples(make_control):
    assert cumulative_integrals(make_control([[2.0, 2.0]])).tolist() == [[0, 1, 2]]
    assert not cumulative_integrals(make_control([[0.0, 0.0, 0.0]])).any()
    assert cumulative_integrals(make_control([[1.0, 3.0]])).tolist() == [
        [0.0, 0.5, 2.0]
    ]


def test_cumulative_is_linear(make_control, rng):
    a = rng.uniform(0, 3, size=(3, 5))
    b = rng.uniform(0, 3, size=(3, 5))
    ia = cumulative_integrals(make_control(a, horizon=2.0))
    ib = cumulative_integrals(make_control(b, horizon=2.0))
    combined = cumulative_integrals(make_control(2.5 * a + b, horizon=2.0))
    np.testing.assert_allclose(combined, 2.5 * ia + ib, rtol=1e-12, atol=1e-12)


def test_interval_lookup(make_control):
    ctrl = make_control([[1.0, 2.0, 3.0, 4.0]])
    grid = ctrl.grid
    assert interval_index(grid, [0.0, 0.25, 0.3, 0.999, 1.0]).tolist() == [
        0,
        1,
        1,
        3,
        3,
    ]
    assert evaluate_at(ctrl, 1.0).tolist() == [4.0]
    assert evaluate_at(ctrl, 0.6).tolist() == [3.0]


def test_control_validation(make_control):
    with pytest.raises(ValidationError):
        make_control([[1.0, -0.5]])
    grid = uniform_grid(1.0, 2)
    with pytest.raises(ValidationError):
        PiecewiseControl(grid=grid, values=[[1.0, 2.0, 3.0]], kind="effort")
    with pytest.raises(ValidationError):
        PiecewiseControl(grid=grid, values=[[1.0, 2.0]], kind="speed")


def test_effort_violations(make_control):
    eta = make_control([[0.5, 0.7], [0.5, 0.4], [1.0, 0.2]], kind="effort")
    violations = effort_violations(eta, [0, 0, 1])
    assert len(violations) == 1
    i, n, excess = violations[0]
    assert (i, n) == (0, 1)
    assert excess == pytest.approx(0.1)
    assert effort_violations(eta, [0, 1, 2]) == []
    with pytest.raises(DiscretizationError):
        effort_violations(eta, [0, 0])


def test_csv_round_trip(make_control, rng, tmp_path):
    ctrl = make_control(rng.uniform(0, 1, size=(2, 3)), horizon=5.0, kind="effort")
    path = control_to_csv(ctrl, tmp_path / "eta.csv")
    header = path.read_text().splitlines()[0]
    assert header == "t_start,t_end,flow_1,flow_2"
    back = control_from_csv(path, "effort")
    assert back.kind == "effort"
    np.testing.assert_allclose(back.matrix, ctrl.matrix, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.grid.times, ctrl.grid.times, rtol=0, atol=1e-12)


def test_csv_errors(tmp_path):
    with pytest.raises(DiscretizationError):
        control_from_csv(tmp_path / "missing.csv", "rates")
    bad = tmp_path / "bad.csv"
    bad.write_text("t_start,t_end,u_1\n0,1,0.5\n")
    with pytest.raises(DiscretizationError):
        control_from_csv(bad, "rates")
    gap = tmp_path / "gap.csv"
    gap.write_text("t_start,t_end,flow_1\n0,1,0.5\n1.5,2,0.5\n")
    with pytest.raises(DiscretizationError):
        control_from_csv(gap, "rates")
