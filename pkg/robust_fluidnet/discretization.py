import logging
from pathlib import Path
from typing import List, Literal, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

ControlKind = Literal["rates", "effort"]


class DiscretizationError(Exception):
    """Custom exception for time grid and control errors"""

    pass


class TimeGrid(BaseModel):
    model_config = {"frozen": True}

    breakpoints: List[float] = Field(
        ..., min_length=2, description="0 = t_0 < t_1 < ... < t_N = T"
    )

    @field_validator("breakpoints")
    def validate_breakpoints(cls, v):
        if v[0] != 0.0:
            raise ValueError(f"first breakpoint must be 0, got {v[0]}")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.isfinite(v[-1]):
            raise ValueError("breakpoints must be finite")
        return v

    @property
    def num_intervals(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def horizon(self) -> float:
        return self.breakpoints[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array(self.breakpoints, dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.times)

    def check_horizon(self, horizon: float, tol: float = 1e-12) -> None:
        if abs(self.horizon - horizon) > tol * max(1.0, horizon):
            raise DiscretizationError(
                f"grid ends at {self.horizon} but the network horizon is {horizon}"
            )


class PiecewiseControl(BaseModel):
    """Control values per flow (rows) and grid interval (columns)"""

    model_config = {"frozen": True}

    grid: TimeGrid
    values: List[List[float]]
    kind: ControlKind

    @model_validator(mode="after")
    def validate_values(self):
        N = self.grid.num_intervals
        for j, row in enumerate(self.values):
            if len(row) != N:
                raise ValueError(f"flow {j} has {len(row)} values for {N} intervals")
            if any(not np.isfinite(v) or v < 0 for v in row):
                raise ValueError(f"flow {j} has a negative or non-finite value")
        return self

    @property
    def num_flows(self) -> int:
        return len(self.values)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.values, dtype=float).reshape(
            self.num_flows, self.grid.num_intervals
        )


def uniform_grid(horizon: float, num_intervals: int) -> TimeGrid:
    if num_intervals < 1 or not horizon > 0:
        raise DiscretizationError(
            f"need horizon > 0 and at least one interval, "
            f"got ({horizon}, {num_intervals})"
        )
    return TimeGrid(
        breakpoints=[n * horizon / num_intervals for n in range(num_intervals + 1)]
    )


def cumulative_integrals(ctrl: PiecewiseControl) -> np.ndarray:
    """J x (N+1) matrix of ∫_0^{t_n} ctrl_j(s) ds"""
    areas = ctrl.matrix * ctrl.grid.widths
    out = np.zeros((ctrl.num_flows, ctrl.grid.num_intervals + 1))
    np.cumsum(areas, axis=1, out=out[:, 1:])
    return out


def interval_index(grid: TimeGrid, t) -> np.ndarray:
    """Index of the interval containing each t; t = T belongs to the last one"""
    idx = np.searchsorted(grid.times, np.asarray(t, dtype=float), side="right") - 1
    return np.clip(idx, 0, grid.num_intervals - 1)


def evaluate_at(ctrl: PiecewiseControl, t: float) -> np.ndarray:
    return ctrl.matrix[:, int(interval_index(ctrl.grid, t))]


def effort_violations(
    ctrl: PiecewiseControl, server_of_flow: Sequence[int], tol: float = 1e-9
) -> List[Tuple[int, int, float]]:
    """(server, interval, excess) for every per-server effort sum above 1 + tol"""
    values = ctrl.matrix
    if len(server_of_flow) != values.shape[0]:
        raise DiscretizationError(
            f"{len(server_of_flow)} server assignments for {values.shape[0]} flows"
        )
    num_servers = max(server_of_flow, default=-1) + 1
    sums = np.zeros((num_servers, values.shape[1]))
    np.add.at(sums, np.asarray(server_of_flow), values)
    return [
        (int(i), int(n), float(sums[i, n] - 1.0))
        for i, n in zip(*np.nonzero(sums > 1.0 + tol))
    ]


def control_to_frame(ctrl: PiecewiseControl) -> pd.DataFrame:
    times = ctrl.grid.times
    frame = pd.DataFrame({"t_start": times[:-1], "t_end": times[1:]})
    for j, row in enumerate(ctrl.matrix):
        frame[f"flow_{j + 1}"] = row
    return frame


def control_to_csv(ctrl: PiecewiseControl, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        control_to_frame(ctrl).to_csv(path, index=False)
    except OSError as e:
        raise DiscretizationError(f"Failed to write control file {path}: {str(e)}")
    return path


def control_from_csv(path: Union[str, Path], kind: ControlKind) -> PiecewiseControl:
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DiscretizationError(f"Failed to read control file {path}: {str(e)}")

    flow_cols = [c for c in frame.columns if c.startswith("flow_")]
    expected = ["t_start", "t_end"] + [f"flow_{j + 1}" for j in range(len(flow_cols))]
    if list(frame.columns) != expected or frame.empty:
        raise DiscretizationError(
            f"{path}: expected header {','.join(expected)} and at least one row"
        )
    starts, ends = frame["t_start"].to_numpy(float), frame["t_end"].to_numpy(float)
    if not np.allclose(starts[1:], ends[:-1], rtol=0, atol=1e-12):
        raise DiscretizationError(f"{path}: intervals are not contiguous")
    grid = TimeGrid(breakpoints=[*starts.tolist(), float(ends[-1])])
    values = frame[flow_cols].to_numpy(float).T
    return PiecewiseControl(grid=grid, values=values.tolist(), kind=kind)
