import numpy as np
import pytest

from robust_fluidnet.discretization import PiecewiseControl, uniform_grid
from robust_fluidnet.network_model import (
    FluidNetwork,
    apply_service_epsilon,
    build_criss_cross,
)


def _network(
    server_of_flow,
    G,
    tau,
    lam,
    alpha,
    cost,
    horizon=1.0,
    tau_dev=None,
    mu=None,
    mu_dev=None,
    lam_dev=None,
):
    G = np.asarray(G, dtype=float)
    K, J = G.shape
    tau = [float(t) for t in tau]
    return FluidNetwork(
        num_servers=max(server_of_flow) + 1,
        num_flows=J,
        num_buffers=K,
        server_of_flow=list(server_of_flow),
        buffer_of_flow=[int(np.argmax(G[:, j] == 1.0)) for j in range(J)],
        routing=G.tolist(),
        arrival_nominal=[float(v) for v in lam],
        arrival_dev=[float(v) for v in (lam_dev or [0.0] * K)],
        service_time_nominal=tau,
        service_time_dev=[float(v) for v in (tau_dev or [0.0] * J)],
        service_rate_nominal=[float(v) for v in (mu or [1.0 / t for t in tau])],
        service_rate_dev=[float(v) for v in (mu_dev or [0.0] * J)],
        initial_buffer=[float(v) for v in alpha],
        holding_cost=[float(v) for v in cost],
        horizon=horizon,
    )


@pytest.fixture
def make_network():
    """Factory for small hand-built networks"""
    return _network


@pytest.fixture
def criss_cross():
    return build_criss_cross(
        lambda1=1.0,
        lambda2=1.0,
        mu1=2.0,
        mu2=2.0,
        mu3=2.0,
        alpha=[1.0, 2.0, 0.5],
        cost=[1.0, 1.0, 1.0],
        horizon=1.0,
    )


@pytest.fixture
def uncertain_criss_cross(criss_cross):
    net = apply_service_epsilon(criss_cross, 0.2)
    return net.model_copy(
        update={"arrival_dev": [0.1, 0.2, 0.0], "holding_cost": [1.0, 2.0, 1.5]}
    )


@pytest.fixture
def make_control():
    def factory(values, horizon=1.0, kind="rates"):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        grid = uniform_grid(horizon, values.shape[1])
        return PiecewiseControl(grid=grid, values=values.tolist(), kind=kind)

    return factory


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))
