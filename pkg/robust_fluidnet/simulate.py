import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.integrate import simpson, trapezoid

from .config import DEFAULT_SUBSTEPS
from .discretization import PiecewiseControl, effort_violations
from .network_model import FluidNetwork

logger = logging.getLogger(__name__)

HARMONICS = 4
EFFORT_TOL = 1e-9


class SimulationError(Exception):
    """Custom exception for realization and trajectory errors"""

    pass


class TauPath(BaseModel):
    """Realized service times τ_j(t) = τ̄_j (1 + ε/4 Σ_n sin(nπt + φ_jn)), n = 1..4"""

    model_config = {"frozen": True}

    base: List[float] = Field(..., min_length=1)
    epsilon: float = Field(..., ge=0, lt=1)
    phases: List[List[float]]

    @field_validator("base")
    def validate_base(cls, v):
        if any(not t > 0 for t in v):
            raise ValueError("nominal service times must be positive")
        return v

    @model_validator(mode="after")
    def validate_phases(self):
        if len(self.phases) != len(self.base) or any(
            len(row) != HARMONICS for row in self.phases
        ):
            raise ValueError(f"phases must be a {len(self.base)} x {HARMONICS} matrix")
        return self

    def evaluate(self, times) -> np.ndarray:
        """J x len(times) matrix of τ_j(t)"""
        t = np.atleast_1d(np.asarray(times, dtype=float))
        n = np.arange(1, HARMONICS + 1)
        phases = np.asarray(self.phases, dtype=float)
        angles = math.pi * n[None, :, None] * t[None, None, :] + phases[:, :, None]
        wave = np.sin(angles).mean(axis=1)
        return np.asarray(self.base)[:, None] * (1.0 + self.epsilon * wave)


class Trajectory(BaseModel):
    model_config = {"frozen": True}

    times: List[float]
    levels: List[List[float]]
    min_level: List[float]
    unclamped: Optional[List[List[float]]] = None

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float).reshape(len(self.levels), -1)

    @property
    def raw_x(self) -> np.ndarray:
        """Levels before truncation at zero"""
        if self.unclamped is None:
            return self.x
        return np.asarray(self.unclamped, dtype=float).reshape(len(self.unclamped), -1)


def realize_tau(
    net: FluidNetwork, epsilon: float, seed: Union[int, np.random.SeedSequence]
) -> TauPath:
    """Phases φ_jn ~ U[0, 2π) drawn flow by flow from PCG64"""
    if not 0 <= epsilon < 1:
        raise SimulationError(f"epsilon must lie in [0, 1), got {epsilon}")
    rng = np.random.Generator(np.random.PCG64(seed))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(net.num_flows, HARMONICS))
    return TauPath(
        base=net.service_time_nominal, epsilon=epsilon, phases=phases.tolist()
    )


def sample_tau(path: TauPath, times) -> np.ndarray:
    return path.evaluate(times)


def transform_control(
    u: PiecewiseControl,
    tau_nom: Sequence[float],
    epsilon: float,
    server_of_flow: Optional[Sequence[int]] = None,
) -> PiecewiseControl:
    """η = u τ̄ (1 − ε); with `server_of_flow` the effort caps are re-checked"""
    if u.kind != "rates":
        raise SimulationError(f"expected a rates control, got {u.kind}")
    tau = np.asarray(tau_nom, dtype=float)
    if tau.size != u.num_flows:
        raise SimulationError(f"{tau.size} service times for {u.num_flows} flows")
    eta = PiecewiseControl(
        grid=u.grid,
        values=(u.matrix * tau[:, None] * (1.0 - epsilon)).tolist(),
        kind="effort",
    )
    if server_of_flow is not None:
        violations = effort_violations(eta, server_of_flow, EFFORT_TOL)
        if violations:
            i, n, excess = violations[0]
            raise SimulationError(
                f"transformed control exceeds the effort cap of server {i} on "
                f"interval {n} by {excess:.3e} ({len(violations)} violations)"
            )
    return eta


def fine_times(ctrl: PiecewiseControl, substeps: int) -> np.ndarray:
    """Control breakpoints with every interval split into `substeps` panels"""
    edges = ctrl.grid.times
    inner = np.linspace(0.0, 1.0, substeps + 1)[:-1]
    pts = edges[:-1, None] + np.diff(edges)[:, None] * inner[None, :]
    return np.append(pts.ravel(), edges[-1])


def simulate_trajectory(
    net: FluidNetwork,
    eta: PiecewiseControl,
    path: TauPath,
    substeps: int = DEFAULT_SUBSTEPS,
    clamp: bool = False,
) -> Trajectory:
    """x̂_k(t) = α_k + λ̄_k t − Σ_j G_kj ∫_0^t η_j(s)/τ_j(s) ds.

    Each panel integral is Simpson's rule on its endpoints and midpoint. Levels
    are not truncated at zero unless `clamp` is set; `min_level` always reports
    the untruncated minimum.
    """
    if substeps < 1:
        raise SimulationError(f"substeps must be at least 1, got {substeps}")
    if eta.num_flows != net.num_flows or len(path.base) != net.num_flows:
        raise SimulationError("control, service path and network disagree on flows")

    t = fine_times(eta, substeps)
    mids = (t[:-1] + t[1:]) / 2
    nodes = np.stack([t[:-1], mids, t[1:]], axis=-1)
    rate = 1.0 / path.evaluate(nodes.ravel()).reshape(net.num_flows, *nodes.shape)
    panel = simpson(rate, x=np.broadcast_to(nodes, rate.shape), axis=-1)

    effort = np.repeat(eta.matrix, substeps, axis=1)
    served = np.zeros((net.num_flows, t.size))
    np.cumsum(effort * panel, axis=1, out=served[:, 1:])

    levels = net.alpha[:, None] + net.lam[:, None] * t[None, :] - net.G @ served
    min_level = levels.min(axis=1)
    unclamped = None
    if clamp:
        unclamped = levels.tolist()
        levels = np.maximum(levels, 0.0)
    return Trajectory(
        times=t.tolist(),
        levels=levels.tolist(),
        min_level=min_level.tolist(),
        unclamped=unclamped,
    )


def holding_cost(traj: Trajectory, c) -> float:
    """∫ c·x̂ dt by the trapezoid rule on the trajectory's grid"""
    return float(trapezoid(np.asarray(c, dtype=float) @ traj.x, traj.t))


def negativity_events(traj: Trajectory, tol: float = 1e-9) -> int:
    """Number of (buffer, time) samples below −tol, counted before any clamping"""
    return int(np.count_nonzero(traj.raw_x < -tol))


def trajectory_to_csv(traj: Trajectory, path: Union[str, Path]) -> Path:
    path = Path(path)
    frame = pd.DataFrame({"t": traj.t})
    for k, row in enumerate(traj.x):
        frame[f"x_{k + 1}"] = row
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise SimulationError(f"Failed to write trajectory file {path}: {str(e)}")
    return path


def tau_path_to_csv(tau: TauPath, times, path: Union[str, Path]) -> Path:
    path = Path(path)
    t = np.asarray(times, dtype=float)
    frame = pd.DataFrame({"t": t})
    for j, row in enumerate(sample_tau(tau, t)):
        frame[f"tau_{j + 1}"] = row
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise SimulationError(f"Failed to write service-time file {path}: {str(e)}")
    return path
