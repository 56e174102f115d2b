import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from robust_fluidnet.experiment import (
    CellRecord,
    ExperimentConfig,
    ExperimentError,
    ExperimentReport,
    delta12,
    derive_seed,
    param_seed,
    realization_seed,
    report_frame,
    run_experiment,
    summarize,
    summary_frame,
    write_report,
)


def _small_config():
    return ExperimentConfig(
        num_servers=1,
        flows_per_server=2,
        epsilons=[0.05, 0.2],
        n_param_draws=2,
        n_realizations=2,
        grid_intervals=4,
        substeps=4,
        seed=7,
    )


@pytest.fixture
def small_config():
    return _small_config()


@pytest.fixture(scope="module")
def small_report():
    return run_experiment(_small_config())


def test_delta12_examples():
    assert delta12(10.0, 8.0) == pytest.approx(0.2)
    assert delta12(10.0, 12.0) == pytest.approx(-0.2)
    assert delta12(4.0, 4.0) == 0.0
    with pytest.raises(ExperimentError):
        delta12(0.0, 1.0)


def test_seeds_are_derived_by_counter():
    assert param_seed(2024, 3) == derive_seed(2024, 0, 3)
    assert realization_seed(2024, 3, 1) == derive_seed(2024, 1, 3, 1)
    seeds = {param_seed(2024, d) for d in range(5)}
    seeds |= {realization_seed(2024, d, r) for d in range(5) for r in range(5)}
    assert len(seeds) == 30
    assert all(0 <= s < 2**64 for s in seeds)
    assert param_seed(2024, 0) != param_seed(2025, 0)


def test_config_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig(num_servers=1, flows_per_server=1, epsilons=[0.0])
    with pytest.raises(ValidationError):
        ExperimentConfig(num_servers=1, flows_per_server=1, epsilons=[1.0])
    with pytest.raises(ValidationError):
        ExperimentConfig(num_servers=1, flows_per_server=1, epsilons=[])
    with pytest.raises(ValidationError):
        ExperimentConfig(num_servers=1, flows_per_server=1, jobs=0)
    with pytest.raises(ValidationError, match="epsilon"):
        ExperimentConfig(num_servers=1, flows_per_server=1, epsilon=[0.3])
    cfg = ExperimentConfig(num_servers=2, flows_per_server=3)
    assert cfg.epsilons == [0.01, 0.02, 0.05, 0.1, 0.2]
    assert cfg.n_param_draws == 10 and cfg.n_realizations == 10


def test_every_instance_succeeds(small_report):
    assert len(small_report.instances) == 4
    assert [r.status for r in small_report.instances] == ["ok"] * 4
    assert [(r.epsilon, r.draw) for r in small_report.instances] == [
        (0.05, 0),
        (0.05, 1),
        (0.2, 0),
        (0.2, 1),
    ]
    for record in small_report.instances:
        assert record.transformed_bound_B >= record.bound_B - 1e-7
        assert record.gap_A <= 1e-6 * (1 + abs(record.bound_A))
        assert record.gap_B <= 1e-6 * (1 + abs(record.bound_B))


def test_cells_are_consistent(small_report):
    cells = small_report.cells
    assert len(cells) == 8
    for cell in cells:
        assert cell.z1 > 0 and cell.z2 > 0
        # G = I and realized service never exceeds the planned rate
        assert cell.min_x_A >= -1e-6 and cell.min_x_B >= -1e-6
        assert cell.delta12 == pytest.approx((cell.z1 - cell.z2) / cell.z1)
    # networks and service paths are shared across uncertainty levels
    low = [(c.param_seed, c.real_seed) for c in cells if c.epsilon == 0.05]
    high = [(c.param_seed, c.real_seed) for c in cells if c.epsilon == 0.2]
    assert low == high
    assert len(set(low)) == 4


def test_summary_pools_cells(small_report):
    rows = {row.epsilon: row for row in small_report.summary}
    for eps, row in rows.items():
        values = [c.delta12 for c in small_report.cells if c.epsilon == eps]
        assert row.n_valid == 4 and row.n_excluded == 0
        assert row.mean_delta12_pct == pytest.approx(100 * np.mean(values))


def test_summary_skips_excluded_cells(small_config):
    cells = [
        CellRecord(
            epsilon=0.05,
            param_seed=1,
            real_seed=2,
            z1=2.0,
            z2=1.0,
            delta12=0.5,
            min_x_A=0.0,
            min_x_B=0.0,
        ),
        CellRecord(
            epsilon=0.05,
            param_seed=1,
            real_seed=3,
            z1=0.0,
            z2=1.0,
            delta12=None,
            min_x_A=-1.0,
            min_x_B=0.0,
        ),
    ]
    low, high = summarize(small_config, cells)
    assert (low.mean_delta12_pct, low.n_valid, low.n_excluded) == (50.0, 1, 1)
    assert math.isnan(high.mean_delta12_pct) and high.n_valid == 0


def test_parallel_run_matches_serial(small_config, small_report):
    parallel = run_experiment(small_config.model_copy(update={"jobs": 2}))
    pd.testing.assert_frame_equal(report_frame(parallel), report_frame(small_report))
    pd.testing.assert_frame_equal(summary_frame(parallel), summary_frame(small_report))


def test_write_report(small_report, tmp_path):
    paths = write_report(small_report, tmp_path / "out")
    assert [p.name for p in paths] == ["report.csv", "summary.csv", "instances.csv"]
    report = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert report[0] == "epsilon,param_seed,real_seed,z1,z2,delta12,min_x_A,min_x_B"
    assert len(report) == 9
    summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert summary[0] == "epsilon,mean_delta12_pct,n_valid"
    back = pd.read_csv(tmp_path / "out" / "instances.csv")
    assert list(back["status"]) == ["ok"] * 4


def test_write_report_failure(small_config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ExperimentError):
        write_report(ExperimentReport(config=small_config), blocker / "out")


DESK_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.json"


@pytest.fixture(scope="module")
def desk_config():
    data = json.loads(DESK_CONFIG.read_text())
    return ExperimentConfig.model_validate({**data, "jobs": 4})


@pytest.mark.slow
def test_improvement_grows_with_uncertainty(desk_config):
    report = run_experiment(desk_config)
    means = [row.mean_delta12_pct for row in report.summary]
    assert [row.epsilon for row in report.summary] == desk_config.epsilons
    assert all(row.n_valid > 0 for row in report.summary)
    assert all(a < b for a, b in zip(means, means[1:]))
    assert 5.0 <= means[-1] <= 35.0
    assert means[0] < means[-1] / 4

    # the mean at one level barely depends on the number of servers
    smaller = desk_config.model_copy(update={"num_servers": 2, "epsilons": [0.1]})
    (row,) = run_experiment(smaller).summary
    assert abs(row.mean_delta12_pct - means[desk_config.epsilons.index(0.1)]) < 5.0
