import json
import logging
from pathlib import Path
from typing import List, Literal, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .config import DEFAULT_HORIZON
from .uncertainty import tau_box_to_mu_box

logger = logging.getLogger(__name__)

ROUTING_TOL = 1e-12
CONSISTENCY_TOL = 1e-9


class NetworkError(Exception):
    """Custom exception for network construction and I/O errors"""

    pass


def _array(values) -> np.ndarray:
    return np.array(values, dtype=float)


class FluidNetwork(BaseModel):
    """Multi-class fluid processing network.

    Indices are 0-based. ``routing`` is the K x J matrix G with
    G[buffer_of_flow[j], j] = 1 and G[k, j] = -p_jk for the buffers flow j feeds.
    Service is stored both as times (τ̄, τ̂) and as rates (μ̄, μ̂); ``authoritative``
    names the pair the other was derived from.
    """

    model_config = {"frozen": True, "populate_by_name": True}

    num_servers: int = Field(..., ge=1, alias="servers")
    num_flows: int = Field(..., ge=1, alias="flows")
    num_buffers: int = Field(..., ge=1, alias="buffers")
    server_of_flow: List[int]
    buffer_of_flow: List[int]
    routing: List[List[float]] = Field(..., alias="G")
    arrival_nominal: List[float] = Field(..., alias="lambda_nom")
    arrival_dev: List[float] = Field(..., alias="lambda_dev")
    service_time_nominal: List[float] = Field(..., alias="tau_nom")
    service_time_dev: List[float] = Field(..., alias="tau_dev")
    service_rate_nominal: List[float] = Field(..., alias="mu_nom")
    service_rate_dev: List[float] = Field(..., alias="mu_dev")
    initial_buffer: List[float] = Field(..., alias="alpha")
    holding_cost: List[float] = Field(..., alias="cost")
    horizon: float = Field(..., gt=0)
    authoritative: Literal["tau", "mu"] = "tau"

    @model_validator(mode="after")
    def validate_shapes(self):
        J, K = self.num_flows, self.num_buffers
        per_flow = {
            "server_of_flow": self.server_of_flow,
            "buffer_of_flow": self.buffer_of_flow,
            "tau_nom": self.service_time_nominal,
            "tau_dev": self.service_time_dev,
            "mu_nom": self.service_rate_nominal,
            "mu_dev": self.service_rate_dev,
        }
        per_buffer = {
            "lambda_nom": self.arrival_nominal,
            "lambda_dev": self.arrival_dev,
            "alpha": self.initial_buffer,
            "cost": self.holding_cost,
        }
        for name, values in per_flow.items():
            if len(values) != J:
                raise ValueError(
                    f"{name} has {len(values)} entries, expected {J} flows"
                )
        for name, values in per_buffer.items():
            if len(values) != K:
                raise ValueError(
                    f"{name} has {len(values)} entries, expected {K} buffers"
                )
        if len(self.routing) != K or any(len(row) != J for row in self.routing):
            raise ValueError(f"G must be a {K} x {J} matrix")
        for j, (i, k) in enumerate(zip(self.server_of_flow, self.buffer_of_flow)):
            if not 0 <= i < self.num_servers:
                raise ValueError(f"server_of_flow[{j}] = {i} out of range")
            if not 0 <= k < K:
                raise ValueError(f"buffer_of_flow[{j}] = {k} out of range")
        return self

    @property
    def G(self) -> np.ndarray:
        return _array(self.routing)

    @property
    def lam(self) -> np.ndarray:
        return _array(self.arrival_nominal)

    @property
    def lam_dev(self) -> np.ndarray:
        return _array(self.arrival_dev)

    @property
    def tau(self) -> np.ndarray:
        return _array(self.service_time_nominal)

    @property
    def tau_dev(self) -> np.ndarray:
        return _array(self.service_time_dev)

    @property
    def mu(self) -> np.ndarray:
        return _array(self.service_rate_nominal)

    @property
    def mu_dev(self) -> np.ndarray:
        return _array(self.service_rate_dev)

    @property
    def alpha(self) -> np.ndarray:
        return _array(self.initial_buffer)

    @property
    def c(self) -> np.ndarray:
        return _array(self.holding_cost)

    def flows_of_server(self, i: int) -> List[int]:
        return [j for j, s in enumerate(self.server_of_flow) if s == i]

    def nominal_load(self) -> np.ndarray:
        """Per-server load Σ τ̄_j r_j, with flow throughputs r from G r = λ̄"""
        r, *_ = np.linalg.lstsq(self.G, self.lam, rcond=None)
        load = np.zeros(self.num_servers)
        np.add.at(load, self.server_of_flow, self.tau * r)
        return load


def _interval_midpoint(nominal: np.ndarray, dev: np.ndarray):
    """Midpoint and half-width of the inverse of [nominal - dev, nominal + dev]"""
    eps = dev / nominal
    mid = 1.0 / (nominal * (1.0 - eps**2))
    return mid, eps * mid


def build_criss_cross(
    lambda1: float,
    lambda2: float,
    mu1: float,
    mu2: float,
    mu3: float,
    alpha,
    cost,
    horizon: float,
) -> FluidNetwork:
    """Two servers, three buffers; flow 0 feeds buffer 2, served by server 1.

    Server 0 processes flows 0 and 1, server 1 processes flow 2.
    """
    rates = {"lambda1": lambda1, "lambda2": lambda2, "mu1": mu1, "mu2": mu2, "mu3": mu3}
    for name, value in rates.items():
        if not value > 0:
            raise NetworkError(f"{name} must be positive, got {value}")
    mu = [float(mu1), float(mu2), float(mu3)]
    return FluidNetwork(
        num_servers=2,
        num_flows=3,
        num_buffers=3,
        server_of_flow=[0, 0, 1],
        buffer_of_flow=[0, 1, 2],
        routing=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]],
        arrival_nominal=[float(lambda1), float(lambda2), 0.0],
        arrival_dev=[0.0, 0.0, 0.0],
        service_time_nominal=[1.0 / m for m in mu],
        service_time_dev=[0.0, 0.0, 0.0],
        service_rate_nominal=mu,
        service_rate_dev=[0.0, 0.0, 0.0],
        initial_buffer=list(map(float, alpha)),
        holding_cost=list(map(float, cost)),
        horizon=horizon,
        authoritative="mu",
    )


def random_network(
    num_servers: int,
    flows_per_server: int,
    epsilon: float,
    seed: Union[int, np.random.SeedSequence],
    horizon: float = DEFAULT_HORIZON,
) -> FluidNetwork:
    """Random network without internal inflows (G = identity).

    Draws from PCG64: μ̄ ~ U[5, 25], λ̄ ~ U[2, 5], α ~ U[10, 20], c ~ U[1, 2],
    in that order. τ̄ is derived so that tau_box_to_mu_box(τ̄, ε) returns μ̄,
    and τ̂ = ε τ̄.
    """
    if num_servers < 1 or flows_per_server < 1:
        raise NetworkError("num_servers and flows_per_server must be at least 1")
    if not 0 <= epsilon < 1:
        raise NetworkError(f"epsilon must lie in [0, 1), got {epsilon}")
    rng = np.random.Generator(np.random.PCG64(seed))
    J = num_servers * flows_per_server
    mu = rng.uniform(5.0, 25.0, J)
    lam = rng.uniform(2.0, 5.0, J)
    alpha = rng.uniform(10.0, 20.0, J)
    cost = rng.uniform(1.0, 2.0, J)
    tau = 1.0 / (mu * (1.0 - epsilon**2))
    return FluidNetwork(
        num_servers=num_servers,
        num_flows=J,
        num_buffers=J,
        server_of_flow=[j // flows_per_server for j in range(J)],
        buffer_of_flow=list(range(J)),
        routing=np.eye(J).tolist(),
        arrival_nominal=lam.tolist(),
        arrival_dev=[0.0] * J,
        service_time_nominal=tau.tolist(),
        service_time_dev=(epsilon * tau).tolist(),
        service_rate_nominal=mu.tolist(),
        service_rate_dev=(epsilon * mu).tolist(),
        initial_buffer=alpha.tolist(),
        holding_cost=cost.tolist(),
        horizon=horizon,
        authoritative="tau",
    )


def validate_network(net: FluidNetwork) -> List[str]:
    """One diagnostic per violated invariant; empty when the network is sound"""
    issues = []
    G = net.G
    for j in range(net.num_flows):
        k = net.buffer_of_flow[j]
        if G[k, j] != 1.0:
            issues.append(f"flow {j}: G[{k},{j}] = {G[k, j]}, expected 1")
        others = np.delete(G[:, j], k)
        if np.any(others > 0) or np.any(others < -1):
            issues.append(f"flow {j}: routing entries outside [-1, 0] in column {j}")
        total = -others.sum()
        if total > 1 + ROUTING_TOL:
            issues.append(
                f"flow {j}: routing probabilities in column {j} sum to {total:g} > 1"
            )

    for j in range(net.num_flows):
        if net.tau[j] <= 0:
            issues.append(f"flow {j}: nominal service time must be positive")
        if net.mu[j] <= 0:
            issues.append(f"flow {j}: nominal service rate must be positive")
        if net.tau_dev[j] < 0 or net.mu_dev[j] < 0:
            issues.append(f"flow {j}: negative service deviation")
        if net.tau_dev[j] >= net.tau[j] or net.mu_dev[j] >= net.mu[j]:
            issues.append(f"flow {j}: rate may vanish under perturbation")

    for k in range(net.num_buffers):
        if net.lam_dev[k] < 0:
            issues.append(f"buffer {k}: negative arrival deviation")
        if net.lam_dev[k] > net.lam[k]:
            issues.append(f"buffer {k}: arrival deviation exceeds nominal arrival rate")
        if net.alpha[k] < 0:
            issues.append(f"buffer {k}: negative initial fluid")
        if net.c[k] < 0:
            issues.append(f"buffer {k}: negative holding cost")

    if not issues:
        if net.authoritative == "tau":
            mid, dev = _interval_midpoint(net.tau, net.tau_dev)
            derived, stored = "mu", (net.mu, net.mu_dev)
        else:
            mid, dev = _interval_midpoint(net.mu, net.mu_dev)
            derived, stored = "tau", (net.tau, net.tau_dev)
        scale = 1.0 + np.abs(mid)
        for j in np.flatnonzero(
            (np.abs(stored[0] - mid) > CONSISTENCY_TOL * scale)
            | (np.abs(stored[1] - dev) > CONSISTENCY_TOL * scale)
        ):
            issues.append(
                f"flow {j}: stored {derived} parameters disagree with "
                f"{net.authoritative} parameters"
            )
    return issues


def apply_service_epsilon(net: FluidNetwork, epsilon: float) -> FluidNetwork:
    """τ̂ = ε τ̄ with (μ̄, μ̂) from tau_box_to_mu_box"""
    mu, mu_dev = tau_box_to_mu_box(net.tau, epsilon)
    return net.model_copy(
        update={
            "service_time_dev": (epsilon * net.tau).tolist(),
            "service_rate_nominal": mu.tolist(),
            "service_rate_dev": mu_dev.tolist(),
            "authoritative": "tau",
        }
    )


def with_arrival_deviation(net: FluidNetwork, fraction: float) -> FluidNetwork:
    if not 0 <= fraction <= 1:
        raise NetworkError(
            f"arrival deviation fraction must lie in [0, 1], got {fraction}"
        )
    return net.model_copy(update={"arrival_dev": (fraction * net.lam).tolist()})


def network_to_json(net: FluidNetwork) -> dict:
    return net.model_dump(by_alias=True)


def network_from_json(source: Union[dict, str, Path]) -> FluidNetwork:
    """Parse a network from a JSON object or a JSON file path"""
    if isinstance(source, dict):
        return FluidNetwork.model_validate(source)
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise NetworkError(f"Failed to read network file {path}: {str(e)}")
    except json.JSONDecodeError as e:
        raise NetworkError(f"Invalid JSON in {path}: {str(e)}")
    if not isinstance(data, dict):
        raise NetworkError(f"{path} must contain a JSON object")
    return FluidNetwork.model_validate(data)


def write_network(net: FluidNetwork, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(network_to_json(net), indent=2) + "\n")
    except OSError as e:
        raise NetworkError(f"Failed to write network file {path}: {str(e)}")
    logger.info("wrote network with %d flows to %s", net.num_flows, path)
    return path
