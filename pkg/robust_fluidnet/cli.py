import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator

from .config import (
    DEFAULT_GRID_INTERVALS,
    DEFAULT_HORIZON,
    DEFAULT_SUBSTEPS,
    SEED_ENV_VAR,
    ConfigError,
    log_level_from_env,
    seed_from_env,
)
from .discretization import (
    DiscretizationError,
    control_from_csv,
    control_to_csv,
    uniform_grid,
)
from .experiment import ExperimentConfig, ExperimentError, run_experiment, write_report
from .lp import LpError, export_lp
from .network_model import (
    FluidNetwork,
    NetworkError,
    apply_service_epsilon,
    network_from_json,
    random_network,
    validate_network,
    write_network,
)
from .robustize import RobustBuildError, build_robust_A, build_robust_B, solve_robust
from .simulate import (
    SimulationError,
    holding_cost,
    negativity_events,
    realize_tau,
    simulate_trajectory,
    tau_path_to_csv,
    trajectory_to_csv,
    transform_control,
)
from .uncertainty import UncertaintySet, UncertaintySetError, uncertainty_from_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2


class CliError(Exception):
    """Custom exception for command-line usage errors"""

    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


class GenParameters(BaseModel):
    servers: int = Field(..., ge=1, description="Number of servers")
    flows: int = Field(..., ge=1, description="Flows per server")
    epsilon: float = Field(..., ge=0, lt=1, description="Service-time uncertainty")
    seed: int = Field(..., ge=0, description="Network seed")
    horizon: float = Field(DEFAULT_HORIZON, gt=0)
    out: str = Field(..., min_length=1)


class ProblemParameters(BaseModel):
    network: str = Field(..., min_length=1, description="Network JSON file")
    model: Literal["a", "b"]
    uncertainty: Literal["box", "budgeted", "onesided", "polyhedral"] = "box"
    epsilon: Optional[float] = Field(None, ge=0, lt=1)
    gamma: Optional[List[float]] = None
    poly: Optional[str] = None
    uncertainty_file: Optional[str] = None
    grid: int = Field(DEFAULT_GRID_INTERVALS, ge=1)
    out: str = Field(..., min_length=1)

    @field_validator("gamma")
    def validate_gamma(cls, v):
        if v is not None and any(g <= 0 for g in v):
            raise ValueError("budgets must be positive")
        return v


class SimulateParameters(BaseModel):
    network: str = Field(..., min_length=1)
    control: str = Field(..., min_length=1)
    kind: Literal["rates", "effort"] = "effort"
    epsilon: float = Field(0.0, ge=0, lt=1)
    tau_seed: int = Field(..., ge=0)
    substeps: int = Field(DEFAULT_SUBSTEPS, ge=1)
    clamp: bool = False
    out: str = Field(..., min_length=1)
    tau_out: Optional[str] = None


def format_error_message(error_type: str, details: str) -> str:
    """Format error messages consistently"""
    return f"robust-fluidnet error: {error_type} - {details}"


def _resolve_seed(flag: Optional[int], option: str) -> int:
    if flag is not None:
        return flag
    seed = seed_from_env()
    if seed is None:
        raise CliError(f"no seed given: pass {option} or set {SEED_ENV_VAR}")
    return seed


def _read_json(path: str, what: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise CliError(f"cannot read {what} file {path}: {str(e)}")
    except json.JSONDecodeError as e:
        raise CliError(f"invalid JSON in {what} file {path}: {str(e)}")
    if not isinstance(data, dict):
        raise CliError(f"{what} file {path} must contain a JSON object")
    return data


def _load_network(path: str) -> FluidNetwork:
    net = network_from_json(path)
    issues = validate_network(net)
    if issues:
        raise NetworkError(f"{path}: " + "; ".join(issues))
    return net


def _load_uncertainty(
    params: ProblemParameters, net: FluidNetwork
) -> Tuple[UncertaintySet, Optional[UncertaintySet]]:
    if params.uncertainty_file:
        data = _read_json(params.uncertainty_file, "uncertainty")
    else:
        data = {"kind": params.uncertainty}
        if params.gamma is not None:
            data["gamma"] = params.gamma
        if params.uncertainty == "polyhedral":
            if not params.poly:
                raise CliError("--poly FILE is required for polyhedral uncertainty")
            data.update(_read_json(params.poly, "polyhedron"))
            data["kind"] = "polyhedral"
        elif params.uncertainty in ("budgeted", "onesided") and params.gamma is None:
            raise CliError(f"--gamma is required for {params.uncertainty} uncertainty")
    uset = uncertainty_from_json(data, net)
    arrival = None
    if isinstance(data.get("arrival"), dict):
        arrival = uncertainty_from_json(data["arrival"], net, target="arrival")
    return uset, arrival


def _build_problem(params: ProblemParameters):
    net = _load_network(params.network)
    if params.epsilon is not None:
        net = apply_service_epsilon(net, params.epsilon)
    uset, arrival = _load_uncertainty(params, net)
    grid = uniform_grid(net.horizon, params.grid)
    build = build_robust_A if params.model == "a" else build_robust_B
    return build(net, uset, grid, arrival)


def cmd_gen(args) -> int:
    params = GenParameters(
        servers=args.servers,
        flows=args.flows,
        epsilon=args.epsilon,
        seed=_resolve_seed(args.seed, "--seed"),
        horizon=args.horizon,
        out=args.out,
    )
    net = random_network(
        params.servers,
        params.flows,
        params.epsilon,
        params.seed,
        horizon=params.horizon,
    )
    write_network(net, params.out)
    print(
        f"network: {net.num_flows} flows on {net.num_servers} servers -> {params.out}"
    )
    return EXIT_OK


def _problem_params(args, default_out: str) -> ProblemParameters:
    return ProblemParameters(
        network=args.network,
        model=args.model,
        uncertainty=args.uncertainty,
        epsilon=args.epsilon,
        gamma=args.gamma,
        poly=args.poly,
        uncertainty_file=args.uncertainty_file,
        grid=args.grid,
        out=args.out or default_out,
    )


def cmd_solve(args) -> int:
    params = _problem_params(args, "control.csv")
    rp = _build_problem(params)
    ctrl, solution = solve_robust(rp)
    control_to_csv(ctrl, params.out)
    print(f"objective: {solution.objective:.12g}")
    print(f"lambda: {rp.lambda_cost:.12g}")
    print(f"pivots: {solution.iterations}")
    return EXIT_OK


def cmd_export(args) -> int:
    params = _problem_params(args, "problem.lp")
    rp = _build_problem(params)
    try:
        export_lp(rp.lp, params.out)
    except LpError as e:
        raise CliError(str(e))
    print(
        f"exported {rp.lp.num_rows} rows, {rp.lp.num_columns} columns "
        f"-> {params.out}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = SimulateParameters(
        network=args.network,
        control=args.control,
        kind=args.kind,
        epsilon=args.epsilon,
        tau_seed=_resolve_seed(args.tau_seed, "--tau-seed"),
        substeps=args.substeps,
        clamp=args.clamp,
        out=args.out,
        tau_out=args.tau_out,
    )
    net = _load_network(params.network)
    ctrl = control_from_csv(params.control, params.kind)
    ctrl.grid.check_horizon(net.horizon)
    if ctrl.kind == "rates":
        ctrl = transform_control(ctrl, net.tau, params.epsilon, net.server_of_flow)
    path = realize_tau(net, params.epsilon, params.tau_seed)
    traj = simulate_trajectory(net, ctrl, path, params.substeps, params.clamp)
    trajectory_to_csv(traj, params.out)
    if params.tau_out:
        tau_path_to_csv(path, traj.t, params.tau_out)
    print(f"holding_cost: {holding_cost(traj, net.c):.12g}")
    print(f"min_level: {min(traj.min_level):.12g}")
    print(f"negativity_events: {negativity_events(traj)}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    data = _read_json(args.config, "experiment config")
    if args.jobs is not None:
        data["jobs"] = args.jobs
    if args.seed is not None:
        data["seed"] = args.seed
    elif "seed" not in data:
        env_seed = seed_from_env()
        if env_seed is not None:
            data["seed"] = env_seed
    if args.out_dir is not None:
        data["out_dir"] = args.out_dir
    cfg = ExperimentConfig.model_validate(data)
    report = run_experiment(cfg)
    write_report(report, cfg.out_dir or "results")
    for row in report.summary:
        print(
            f"epsilon={row.epsilon:g} mean_delta12_pct={row.mean_delta12_pct:.4f} "
            f"n_valid={row.n_valid}"
        )
    return EXIT_OK


def _add_problem_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--network", required=True, help="network JSON file")
    p.add_argument("--model", required=True, choices=["a", "b"])
    p.add_argument(
        "--uncertainty",
        default="box",
        choices=["box", "budgeted", "onesided", "polyhedral"],
    )
    p.add_argument("--epsilon", type=float, help="set tau_dev = epsilon * tau_nom")
    p.add_argument("--gamma", type=float, nargs="+", help="budget per server")
    p.add_argument("--poly", help="JSON file with D and d")
    p.add_argument("--uncertainty-file", help="full uncertainty JSON")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID_INTERVALS)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
    )

    parser = _Parser(
        prog="robust-fluidnet",
        description="Robust control of fluid processing networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a random network")
    gen.add_argument("--servers", type=int, required=True)
    gen.add_argument("--flows", type=int, required=True, help="flows per server")
    gen.add_argument("--epsilon", type=float, required=True)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen)

    solve = sub.add_parser("solve", parents=[common], help="solve a robust problem")
    _add_problem_options(solve)
    solve.set_defaults(handler=cmd_solve)

    export = sub.add_parser("export", parents=[common], help="write the LP text file")
    _add_problem_options(export)
    export.set_defaults(handler=cmd_export)

    simulate = sub.add_parser("simulate", parents=[common], help="replay a control")
    simulate.add_argument("--network", required=True)
    simulate.add_argument("--control", required=True)
    simulate.add_argument("--kind", default="effort", choices=["rates", "effort"])
    simulate.add_argument("--epsilon", type=float, default=0.0)
    simulate.add_argument("--tau-seed", type=int)
    simulate.add_argument("--substeps", type=int, default=DEFAULT_SUBSTEPS)
    simulate.add_argument("--clamp", action="store_true")
    simulate.add_argument("--out", default="trajectory.csv")
    simulate.add_argument("--tau-out")
    simulate.set_defaults(handler=cmd_simulate)

    experiment = sub.add_parser(
        "experiment", parents=[common], help="run the Monte-Carlo comparison"
    )
    experiment.add_argument("--config", required=True)
    experiment.add_argument("--jobs", type=int)
    experiment.add_argument("--seed", type=int)
    experiment.add_argument("--out-dir")
    experiment.set_defaults(handler=cmd_experiment)
    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit status"""
    try:
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        logging.basicConfig(
            level=args.log_level or log_level_from_env(),
            stream=sys.stderr,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        try:
            return args.handler(args)
        except ValidationError as e:
            print(format_error_message("Validation Error", str(e)), file=sys.stderr)
            return EXIT_INVALID
        except (LpError, RobustBuildError) as e:
            print(format_error_message("Solver Error", str(e)), file=sys.stderr)
            return EXIT_SOLVER
        except (
            NetworkError,
            UncertaintySetError,
            DiscretizationError,
            SimulationError,
            ExperimentError,
            ConfigError,
        ) as e:
            print(format_error_message("Input Error", str(e)), file=sys.stderr)
            return EXIT_INVALID
    except CliError as e:
        print(format_error_message("Usage Error", str(e)), file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:
        print(format_error_message("Unexpected Error", str(e)), file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    from dotenv import load_dotenv

    load_dotenv()
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
