from .discretization import (
    DiscretizationError,
    PiecewiseControl,
    TimeGrid,
    cumulative_integrals,
    uniform_grid,
)
from .experiment import (
    ExperimentConfig,
    ExperimentError,
    ExperimentReport,
    delta12,
    run_experiment,
)
from .network_model import (
    FluidNetwork,
    NetworkError,
    build_criss_cross,
    random_network,
    validate_network,
)
from .robustize import (
    RobustBuildError,
    RobustProblem,
    build_robust_A,
    build_robust_B,
    compute_lambda,
    solve_robust,
)
from .simulate import (
    SimulationError,
    TauPath,
    Trajectory,
    holding_cost,
    realize_tau,
    simulate_trajectory,
    transform_control,
)
from .uncertainty import (
    UncertaintySet,
    UncertaintySetError,
    tau_box_to_mu_box,
    worst_case_linear,
)

__version__ = "0.1.0"
