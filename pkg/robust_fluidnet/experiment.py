"""Monte-Carlo comparison of the two robust controls.

For every uncertainty level ε and parameter draw a random network is built, the
box-robust processing-rates problem and the box-robust server-effort problem are
solved, and the rates optimum is mapped to an effort control. Both controls are
then replayed against the same realized service-time paths and their realized
holding costs z1 (transformed rates control) and z2 (effort control) compared
through Δ₁₂ = (z1 − z2) / z1.

Seeds are derived by counter, never from execution order:

    param_seed = SeedSequence([base, 0, draw])
    real_seed  = SeedSequence([base, 1, draw, r])

each reduced to one 64-bit integer, which is what the report stores. Networks and
service-time paths are therefore shared across ε as well as across the two
controls.
"""

import logging
import math
from multiprocessing import Pool
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from .config import (
    DEFAULT_EPSILONS,
    DEFAULT_GRID_INTERVALS,
    DEFAULT_HORIZON,
    DEFAULT_SUBSTEPS,
)
from .discretization import uniform_grid
from .lp import LpError, duality_gap
from .network_model import NetworkError, random_network
from .robustize import (
    RobustBuildError,
    build_robust_A,
    build_robust_B,
    evaluate_control,
    solve_robust,
)
from .simulate import (
    SimulationError,
    holding_cost,
    negativity_events,
    realize_tau,
    simulate_trajectory,
    transform_control,
)
from .uncertainty import UncertaintySet, UncertaintySetError

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "epsilon",
    "param_seed",
    "real_seed",
    "z1",
    "z2",
    "delta12",
    "min_x_A",
    "min_x_B",
]
SUMMARY_COLUMNS = ["epsilon", "mean_delta12_pct", "n_valid"]
NEGATIVITY_TOL = 1e-9


class ExperimentError(Exception):
    """Custom exception for experiment configuration and reporting errors"""

    pass


class ExperimentConfig(BaseModel):
    model_config = {"extra": "forbid"}

    num_servers: int = Field(..., ge=1, description="Servers per random network")
    flows_per_server: int = Field(..., ge=1, description="Flows on every server")
    epsilons: List[float] = Field(
        default_factory=lambda: list(DEFAULT_EPSILONS),
        min_length=1,
        description="Service-time uncertainty levels",
    )
    n_param_draws: int = Field(10, ge=1, description="Random networks per level")
    n_realizations: int = Field(10, ge=1, description="Service paths per network")
    grid_intervals: int = Field(DEFAULT_GRID_INTERVALS, ge=1)
    substeps: int = Field(DEFAULT_SUBSTEPS, ge=1)
    horizon: float = Field(DEFAULT_HORIZON, gt=0)
    seed: int = Field(0, ge=0, description="Base seed")
    jobs: int = Field(1, ge=1, description="Worker processes")
    clamp: bool = False
    out_dir: Optional[str] = None

    @field_validator("epsilons")
    def validate_epsilons(cls, v):
        for eps in v:
            if not 0 < eps < 1:
                raise ValueError(f"epsilon {eps} outside (0, 1)")
        return v


class CellRecord(BaseModel):
    epsilon: float
    param_seed: int
    real_seed: int
    z1: float
    z2: float
    delta12: Optional[float]
    min_x_A: float
    min_x_B: float
    neg_events_A: int = 0
    neg_events_B: int = 0


class InstanceRecord(BaseModel):
    epsilon: float
    draw: int
    param_seed: int
    status: str = "ok"
    bound_A: float = math.nan
    bound_B: float = math.nan
    transformed_bound_B: float = math.nan
    gap_A: float = math.nan
    gap_B: float = math.nan
    pivots_A: int = 0
    pivots_B: int = 0
    neg_events_A: int = 0
    neg_events_B: int = 0
    n_excluded: int = 0


class SummaryRow(BaseModel):
    epsilon: float
    mean_delta12_pct: float
    n_valid: int
    n_excluded: int = 0


class ExperimentReport(BaseModel):
    config: ExperimentConfig
    cells: List[CellRecord] = []
    instances: List[InstanceRecord] = []
    summary: List[SummaryRow] = []


def delta12(z1: float, z2: float) -> float:
    """Relative improvement (z1 − z2) / z1"""
    if z1 == 0:
        raise ExperimentError("relative improvement undefined for z1 = 0")
    return (z1 - z2) / z1


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint64)[0])


def param_seed(base: int, draw: int) -> int:
    return derive_seed(base, 0, draw)


def realization_seed(base: int, draw: int, r: int) -> int:
    return derive_seed(base, 1, draw, r)


def run_instance(
    cfg: ExperimentConfig, epsilon: float, draw: int
) -> Tuple[InstanceRecord, List[CellRecord]]:
    """One parameter draw at one uncertainty level, all its realizations"""
    seed = param_seed(cfg.seed, draw)
    record = InstanceRecord(epsilon=epsilon, draw=draw, param_seed=seed)
    cells: List[CellRecord] = []
    try:
        net = random_network(
            cfg.num_servers, cfg.flows_per_server, epsilon, seed, horizon=cfg.horizon
        )
        grid = uniform_grid(net.horizon, cfg.grid_intervals)
        box = UncertaintySet.box(net.num_flows)

        rp_A = build_robust_A(net, box, grid)
        u_star, sol_A = solve_robust(rp_A)
        rp_B = build_robust_B(net, box, grid)
        eta_star, sol_B = solve_robust(rp_B)
        eta_u = transform_control(u_star, net.tau, epsilon, net.server_of_flow)
        replay = evaluate_control(rp_B, eta_u)

        record.bound_A, record.bound_B = sol_A.objective, sol_B.objective
        record.transformed_bound_B = replay.objective if replay.is_optimal else math.inf
        record.gap_A = duality_gap(rp_A.lp, sol_A)
        record.gap_B = duality_gap(rp_B.lp, sol_B)
        record.pivots_A, record.pivots_B = sol_A.iterations, sol_B.iterations

        for r in range(cfg.n_realizations):
            r_seed = realization_seed(cfg.seed, draw, r)
            path = realize_tau(net, epsilon, r_seed)
            traj_1 = simulate_trajectory(net, eta_u, path, cfg.substeps, cfg.clamp)
            traj_2 = simulate_trajectory(net, eta_star, path, cfg.substeps, cfg.clamp)
            z1, z2 = holding_cost(traj_1, net.c), holding_cost(traj_2, net.c)
            if z1 > 0:
                improvement = delta12(z1, z2)
            else:
                improvement = None
                record.n_excluded += 1
                logger.warning(
                    "eps=%g draw=%d realization=%d: z1=%g, cell excluded",
                    epsilon,
                    draw,
                    r,
                    z1,
                )
            cell = CellRecord(
                epsilon=epsilon,
                param_seed=seed,
                real_seed=r_seed,
                z1=z1,
                z2=z2,
                delta12=improvement,
                min_x_A=min(traj_1.min_level),
                min_x_B=min(traj_2.min_level),
                neg_events_A=negativity_events(traj_1, NEGATIVITY_TOL),
                neg_events_B=negativity_events(traj_2, NEGATIVITY_TOL),
            )
            record.neg_events_A += cell.neg_events_A
            record.neg_events_B += cell.neg_events_B
            cells.append(cell)
    except (
        LpError,
        RobustBuildError,
        SimulationError,
        NetworkError,
        UncertaintySetError,
    ) as e:
        record.status = f"{type(e).__name__}: {str(e)}"
        logger.warning("eps=%g draw=%d failed: %s", epsilon, draw, record.status)
        return record, []

    logger.info(
        "eps=%g draw=%d: bounds A=%.6g B=%.6g, transformed=%.6g",
        epsilon,
        draw,
        record.bound_A,
        record.bound_B,
        record.transformed_bound_B,
    )
    return record, cells


def _run_task(task: Tuple[ExperimentConfig, float, int]):
    return task[1], task[2], run_instance(*task)


def summarize(cfg: ExperimentConfig, cells: List[CellRecord]) -> List[SummaryRow]:
    """Per-ε mean of Δ₁₂ in percent, pooled over all valid cells"""
    rows = []
    for eps in cfg.epsilons:
        at_level = [c for c in cells if c.epsilon == eps]
        valid = [c.delta12 for c in at_level if c.delta12 is not None]
        mean = 100.0 * float(np.mean(valid)) if valid else math.nan
        rows.append(
            SummaryRow(
                epsilon=eps,
                mean_delta12_pct=mean,
                n_valid=len(valid),
                n_excluded=len(at_level) - len(valid),
            )
        )
    return rows


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    tasks = [
        (cfg, eps, draw) for eps in cfg.epsilons for draw in range(cfg.n_param_draws)
    ]
    logger.info("running %d instances with %d worker(s)", len(tasks), cfg.jobs)
    if cfg.jobs > 1:
        with Pool(cfg.jobs) as pool:
            results = pool.map(_run_task, tasks)
    else:
        results = [_run_task(task) for task in tasks]

    order = {eps: i for i, eps in enumerate(cfg.epsilons)}
    results.sort(key=lambda item: (order[item[0]], item[1]))
    report = ExperimentReport(config=cfg)
    for _, _, (record, cells) in results:
        report.instances.append(record)
        report.cells.extend(cells)
    report.summary = summarize(cfg, report.cells)
    for row in report.summary:
        logger.info(
            "eps=%g: mean improvement %.3f%% over %d cells (%d excluded)",
            row.epsilon,
            row.mean_delta12_pct,
            row.n_valid,
            row.n_excluded,
        )
    return report


def report_frame(report: ExperimentReport) -> pd.DataFrame:
    return pd.DataFrame(
        [c.model_dump(include=set(REPORT_COLUMNS)) for c in report.cells],
        columns=REPORT_COLUMNS,
    )


def summary_frame(report: ExperimentReport) -> pd.DataFrame:
    return pd.DataFrame(
        [r.model_dump(include=set(SUMMARY_COLUMNS)) for r in report.summary],
        columns=SUMMARY_COLUMNS,
    )


def instances_frame(report: ExperimentReport) -> pd.DataFrame:
    return pd.DataFrame(
        [r.model_dump() for r in report.instances],
        columns=list(InstanceRecord.model_fields),
    )


def write_report(report: ExperimentReport, out_dir: Union[str, Path]) -> List[Path]:
    """report.csv, summary.csv and instances.csv under `out_dir`"""
    out = Path(out_dir)
    frames = {
        "report.csv": report_frame(report),
        "summary.csv": summary_frame(report),
        "instances.csv": instances_frame(report),
    }
    paths = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, frame in frames.items():
            frame.to_csv(out / name, index=False)
            paths.append(out / name)
    except OSError as e:
        raise ExperimentError(f"Failed to write report to {out}: {str(e)}")
    return paths
