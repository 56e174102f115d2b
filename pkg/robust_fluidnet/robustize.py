"""Robust counterparts of the discretized fluid-network problems.

Both models share one buffer definition

    x_k(t) = α_k + λ_k t − Σ_j G_kj ∫_0^t μ_j η_j ds      (u_j = μ_j η_j in model A)

and every uncertain row is brought to the shape

    nominal(x) + sup_{ζ ∈ U} Σ_ℓ w_ℓ E_ℓ(x) ζ_ℓ  ≤  rhs

where E_ℓ(x) ≥ 0 is a control quantity (a rate u_{j,n} or a cumulative effort
H_j(t_n)) and w_ℓ a signed deviation. The supremum is replaced by its LP dual:

    box         Σ |w_ℓ| E_ℓ
    one-sided   Σ_g (Γ_g β_g + Σ_ℓ γ_ℓ),   β_g + γ_ℓ ≥ w_ℓ E_ℓ        (w_ℓ > 0 only)
    budgeted    as one-sided with β_g + γ_ℓ − 2δ_ℓ + w_ℓ E_ℓ ≥ 0,  δ_ℓ ≥ w_ℓ E_ℓ
    polyhedral  d·δ,   Σ_m D_mℓ δ_m + w_ℓ E_ℓ = 0 for every ℓ

with all auxiliaries nonnegative and one copy per row. Minimising over the
auxiliaries with the control fixed gives back the exact worst case.
"""

import logging
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from .discretization import PiecewiseControl, TimeGrid
from .lp import INF, LpError, LpProblem, LpSolution, SolverTolerances, solve_lp
from .lp import with_fixed_columns
from .network_model import FluidNetwork
from .uncertainty import UncertaintySet, arrival_set, worst_case_linear

logger = logging.getLogger(__name__)

ModelTag = Literal["A", "B"]
Expr = Dict[int, float]

LAMBDA_CHECK_TOL = 1e-7


class RobustBuildError(Exception):
    """Custom exception for robust counterpart construction errors"""

    pass


class ProtectionRecord(BaseModel):
    """How the worst-case term of one head row is represented"""

    head: int
    tag: str
    sign: float
    aux: Dict[int, float] = {}
    fixed: Dict[int, float] = {}
    support: List[int] = []


class RobustProblem(BaseModel):
    lp: LpProblem
    grid: TimeGrid
    model: ModelTag
    set_kind: str
    lambda_cost: float = 0.0
    control_columns: List[List[int]]
    epigraph_columns: List[int] = []
    roles: List[str] = []
    protections: List[ProtectionRecord] = []

    @property
    def control_kind(self) -> str:
        return "rates" if self.model == "A" else "effort"

    def control_values(self, ctrl: PiecewiseControl) -> Dict[int, float]:
        values = ctrl.matrix
        if values.shape != (len(self.control_columns), len(self.control_columns[0])):
            raise RobustBuildError(
                f"control has shape {values.shape}, problem expects "
                f"{len(self.control_columns)} x {len(self.control_columns[0])}"
            )
        return {
            col: float(values[j, n])
            for j, cols in enumerate(self.control_columns)
            for n, col in enumerate(cols)
        }

    def protection_of(self, tag: str) -> ProtectionRecord:
        for record in self.protections:
            if record.tag == tag:
                return record
        raise RobustBuildError(f"no protection term tagged {tag}")


def _check_inputs(net: FluidNetwork, uset: UncertaintySet, grid: TimeGrid) -> None:
    grid.check_horizon(net.horizon)
    if uset.dim != net.num_flows:
        raise RobustBuildError(
            f"uncertainty set has dimension {uset.dim}, "
            f"network has {net.num_flows} flows"
        )


def _new_problem(
    net: FluidNetwork, uset: UncertaintySet, grid: TimeGrid, model: ModelTag
) -> RobustProblem:
    _check_inputs(net, uset, grid)
    lp = LpProblem(name=f"robust_{model.lower()}_{uset.kind}")
    prefix = "u" if model == "A" else "eta"
    columns, roles = [], []
    for j in range(net.num_flows):
        row = []
        for n in range(grid.num_intervals):
            row.append(lp.add_column(f"{prefix}_{j}_{n}"))
            roles.append(f"control(j={j},n={n})")
        columns.append(row)
    return RobustProblem(
        lp=lp,
        grid=grid,
        model=model,
        set_kind=uset.kind,
        control_columns=columns,
        roles=roles,
    )


def _ensure_problem(
    problem: Optional[RobustProblem],
    net: FluidNetwork,
    uset: UncertaintySet,
    grid: TimeGrid,
    model: ModelTag,
) -> RobustProblem:
    if problem is None:
        return _new_problem(net, uset, grid, model)
    _check_inputs(net, uset, grid)
    if problem.model != model:
        raise RobustBuildError(
            f"model {model} rows added to a model {problem.model} problem"
        )
    return problem


def _add_aux(rp: RobustProblem, name: str, role: str) -> int:
    rp.roles.append(role)
    return rp.lp.add_column(name)


def _accumulate(target: Expr, expr: Expr, factor: float) -> None:
    for col, a in expr.items():
        target[col] = target.get(col, 0.0) + factor * a


def _cumulative(rp: RobustProblem, grid: TimeGrid, j: int, n: int) -> Expr:
    """∫_0^{t_n} of control j as a column expression"""
    widths = grid.widths
    return {rp.control_columns[j][m]: float(widths[m]) for m in range(n)}


def _add_protection(
    rp: RobustProblem,
    uset: UncertaintySet,
    head: Expr,
    sign: float,
    terms: List[Tuple[int, float, Expr]],
    key: str,
    tag: str,
    budget_pairs: bool = False,
) -> ProtectionRecord:
    """Add sign·P to `head`, P ≥ sup_ζ Σ w_ℓ E_ℓ ζ_ℓ, for terms (ℓ, w_ℓ, E_ℓ)"""
    lp = rp.lp
    record = ProtectionRecord(head=-1, tag=tag, sign=sign)
    support_tag = f"dual-support({tag})"

    def absolute(w: float, expr: Expr) -> None:
        _accumulate(head, expr, sign * w)
        _accumulate(record.fixed, expr, w)

    if uset.kind == "box":
        for _, w, expr in terms:
            absolute(abs(w), expr)
        return record

    if uset.kind == "polyhedral":
        D, d = uset.D_matrix, uset.d_vector
        by_coord: Dict[int, Expr] = {}
        for ell, w, expr in terms:
            if w == 0.0:
                continue
            if not np.any(D[:, ell]):
                raise RobustBuildError(
                    f"{tag}: polyhedron places no constraint on coordinate {ell} "
                    f"but its deviation is {w}"
                )
            _accumulate(by_coord.setdefault(ell, {}), expr, w)
        deltas = []
        for m in range(uset.num_faces):
            col = _add_aux(rp, f"delta_{key}_{m}", f"dual-delta({tag},m={m})")
            deltas.append(col)
            head[col] = head.get(col, 0.0) + sign * d[m]
            record.aux[col] = float(d[m])
        for ell in range(uset.dim):
            if not np.any(D[:, ell]):
                continue
            coeffs = {deltas[m]: D[m, ell] for m in range(uset.num_faces)}
            _accumulate(coeffs, by_coord.get(ell, {}), 1.0)
            record.support.append(
                lp.add_row(coeffs, "=", 0.0, name=f"{key}_eq_{ell}", tag=support_tag)
            )
        return record

    group_of = {ell: g for g, members in enumerate(uset.groups) for ell in members}
    onesided = uset.kind == "onesided"
    betas: Dict[int, int] = {}
    for ell, w, expr in terms:
        if w == 0.0 or (onesided and w < 0):
            continue
        g = group_of.get(ell)
        if g is None:
            absolute(abs(w), expr)
            continue
        if g not in betas:
            betas[g] = _add_aux(rp, f"beta_{key}_{g}", f"dual-beta({tag},g={g})")
            head[betas[g]] = head.get(betas[g], 0.0) + sign * uset.gamma[g]
            record.aux[betas[g]] = float(uset.gamma[g])
        gamma = _add_aux(rp, f"gamma_{key}_{ell}", f"dual-gamma({tag},l={ell})")
        head[gamma] = head.get(gamma, 0.0) + sign
        record.aux[gamma] = 1.0

        if budget_pairs and not onesided:
            delta = _add_aux(rp, f"delta_{key}_{ell}", f"dual-delta({tag},l={ell})")
            pair = {betas[g]: 1.0, gamma: 1.0, delta: -2.0}
            _accumulate(pair, expr, w)
            record.support.append(
                lp.add_row(pair, ">=", 0.0, name=f"{key}_pair_{ell}", tag=support_tag)
            )
            lower = {delta: 1.0}
            _accumulate(lower, expr, -w)
            record.support.append(
                lp.add_row(lower, ">=", 0.0, name=f"{key}_sup_{ell}", tag=support_tag)
            )
        else:
            support = {betas[g]: 1.0, gamma: 1.0}
            _accumulate(support, expr, -abs(w))
            record.support.append(
                lp.add_row(support, ">=", 0.0, name=f"{key}_sup_{ell}", tag=support_tag)
            )
    return record


def _finish_head(
    rp: RobustProblem,
    record: Optional[ProtectionRecord],
    coeffs: Expr,
    relation: str,
    rhs: float,
    name: str,
    tag: str,
) -> int:
    row = rp.lp.add_row(coeffs, relation, rhs, name=name, tag=tag)
    if record is not None:
        record.head = row
        rp.protections.append(record)
    return row


def compute_lambda(
    c,
    lam_nom,
    lam_dev,
    aset: UncertaintySet,
    tolerances: Optional[SolverTolerances] = None,
) -> float:
    """Worst-case arrival cost rate Λ = max c·λ over the arrival set"""
    c = np.asarray(c, dtype=float)
    lam_nom = np.asarray(lam_nom, dtype=float)
    lam_dev = np.asarray(lam_dev, dtype=float)
    if np.any(c < 0) or np.any(lam_dev < 0):
        raise RobustBuildError(
            "holding costs and arrival deviations must be nonnegative"
        )
    if aset.dim != c.size:
        raise RobustBuildError(
            f"arrival set has dimension {aset.dim}, network has {c.size} buffers"
        )
    nominal = float(c @ lam_nom)
    weights = c * lam_dev

    if aset.kind == "box":
        return float(c @ (lam_nom + lam_dev))

    if aset.kind == "polyhedral":
        D, d = aset.D_matrix, aset.d_vector
        p = LpProblem(name="arrival_cost")
        for m in range(aset.num_faces):
            p.add_column(f"delta_{m}", cost=float(d[m]))
        for k in range(aset.dim):
            p.add_row(
                {m: D[m, k] for m in range(aset.num_faces)},
                "=",
                -float(weights[k]),
                name=f"coord_{k}",
            )
        sol = solve_lp(p, tolerances)
        if sol.status != "optimal":
            raise RobustBuildError(
                "arrival-cost counterpart infeasible for this polyhedron"
            )
        value = nominal + sol.objective
        direct, _ = worst_case_linear(aset, weights)
        if abs(sol.objective - direct) > LAMBDA_CHECK_TOL * (1.0 + abs(direct)):
            logger.warning(
                "arrival-cost dual %.10g disagrees with direct worst case %.10g",
                sol.objective,
                direct,
            )
        return value

    p = LpProblem(name="arrival_cost")
    group_of = {k: g for g, members in enumerate(aset.groups) for k in members}
    betas = {
        g: p.add_column(f"beta_{g}", cost=float(aset.gamma[g]))
        for g in range(len(aset.groups))
    }
    extra = 0.0
    for k in range(aset.dim):
        if weights[k] == 0.0:
            continue
        if k not in group_of:
            extra += weights[k]
            continue
        gamma = p.add_column(f"gamma_{k}", cost=1.0)
        p.add_row(
            {betas[group_of[k]]: 1.0, gamma: 1.0},
            ">=",
            float(weights[k]),
            name=f"k_{k}",
        )
    sol = solve_lp(p, tolerances)
    if sol.status != "optimal":
        raise RobustBuildError(f"arrival-cost counterpart is {sol.status}")
    return nominal + extra + sol.objective


def counterpart_balance_A(
    net: FluidNetwork,
    uset: UncertaintySet,
    grid: TimeGrid,
    problem: Optional[RobustProblem] = None,
) -> RobustProblem:
    """α_k + (λ̄_k − λ̂_k) t_n − Σ_j G_kj U_j(t_n) ≥ 0 for every buffer and t_n, n ≥ 1"""
    rp = _ensure_problem(problem, net, uset, grid, "A")
    G, alpha, lam, lam_dev = net.G, net.alpha, net.lam, net.lam_dev
    times = grid.times
    for n in range(1, grid.num_intervals + 1):
        for k in range(net.num_buffers):
            coeffs: Expr = {}
            for j in np.flatnonzero(G[k]):
                _accumulate(coeffs, _cumulative(rp, grid, j, n), -G[k, j])
            rp.lp.add_row(
                coeffs,
                ">=",
                -(alpha[k] + (lam[k] - lam_dev[k]) * times[n]),
                name=f"bal_{k}_{n}",
                tag=f"balance(k={k},n={n})",
            )
    return rp


def counterpart_server_capacity_A(
    net: FluidNetwork,
    uset: UncertaintySet,
    grid: TimeGrid,
    problem: Optional[RobustProblem] = None,
) -> RobustProblem:
    """Σ_{j on i} τ_j u_{j,n} ≤ 1 for every τ in the set, per server and interval"""
    rp = _ensure_problem(problem, net, uset, grid, "A")
    tau, tau_dev = net.tau, net.tau_dev
    for i in range(net.num_servers):
        flows = net.flows_of_server(i)
        if not flows:
            continue
        for n in range(grid.num_intervals):
            key, tag = f"cap_{i}_{n}", f"capacity(i={i},n={n})"
            coeffs = {rp.control_columns[j][n]: float(tau[j]) for j in flows}
            terms = [
                (j, float(tau_dev[j]), {rp.control_columns[j][n]: 1.0}) for j in flows
            ]
            record = _add_protection(rp, uset, coeffs, 1.0, terms, key, tag)
            _finish_head(rp, record, coeffs, "<=", 1.0, key, tag)
    return rp


def counterpart_balance_B(
    net: FluidNetwork,
    uset: UncertaintySet,
    grid: TimeGrid,
    problem: Optional[RobustProblem] = None,
) -> RobustProblem:
    """α_k + (λ̄_k − λ̂_k) t_n − Σ_j G_kj ∫ μ_j η_j ≥ 0 for every μ in the set"""
    rp = _ensure_problem(problem, net, uset, grid, "B")
    G, alpha, lam, lam_dev = net.G, net.alpha, net.lam, net.lam_dev
    mu, mu_dev = net.mu, net.mu_dev
    times = grid.times
    for n in range(1, grid.num_intervals + 1):
        for k in range(net.num_buffers):
            key, tag = f"bal_{k}_{n}", f"balance(k={k},n={n})"
            coeffs: Expr = {}
            terms = []
            for j in np.flatnonzero(G[k]):
                H = _cumulative(rp, grid, j, n)
                _accumulate(coeffs, H, -G[k, j] * mu[j])
                terms.append((int(j), float(-G[k, j] * mu_dev[j]), H))
            record = _add_protection(
                rp, uset, coeffs, -1.0, terms, key, tag, budget_pairs=True
            )
            rhs = -(alpha[k] + (lam[k] - lam_dev[k]) * times[n])
            _finish_head(rp, record, coeffs, ">=", rhs, key, tag)
    return rp


def _add_epigraph_columns(rp: RobustProblem, net: FluidNetwork, grid: TimeGrid):
    """z_0..z_N with trapezoid weights; z_0 is fixed at c·α"""
    widths = grid.widths
    N = grid.num_intervals
    weights = np.zeros(N + 1)
    weights[:-1] += widths / 2
    weights[1:] += widths / 2
    z0 = float(net.c @ net.alpha)
    cols = [rp.lp.add_column("z_0", lower=z0, upper=z0, cost=float(weights[0]))]
    for n in range(1, N + 1):
        cols.append(rp.lp.add_column(f"z_{n}", lower=-INF, cost=float(weights[n])))
    rp.roles.extend(f"epigraph(n={n})" for n in range(N + 1))
    rp.epigraph_columns = cols


def _resolve_lambda(
    net: FluidNetwork, uset: UncertaintySet, arrival: Optional[UncertaintySet]
) -> float:
    aset = arrival if arrival is not None else arrival_set(uset, net.num_buffers)
    return compute_lambda(net.c, net.lam, net.lam_dev, aset)


def objective_counterpart_A(
    net: FluidNetwork,
    uset: UncertaintySet,
    grid: TimeGrid,
    problem: Optional[RobustProblem] = None,
    arrival: Optional[UncertaintySet] = None,
) -> RobustProblem:
    """z_n ≥ Λ t_n + c·α − Σ_j (cᵀG)_j U_j(t_n); objective is the trapezoid of z"""
    rp = _ensure_problem(problem, net, uset, grid, "A")
    rp.lambda_cost = _resolve_lambda(net, uset, arrival)
    _add_epigraph_columns(rp, net, grid)
    cG = net.c @ net.G
    ca = float(net.c @ net.alpha)
    times = grid.times
    for n in range(1, grid.num_intervals + 1):
        coeffs = {rp.epigraph_columns[n]: 1.0}
        for j in np.flatnonzero(cG):
            _accumulate(coeffs, _cumulative(rp, grid, j, n), cG[j])
        rp.lp.add_row(
            coeffs,
            ">=",
            rp.lambda_cost * times[n] + ca,
            name=f"epi_{n}",
            tag=f"epigraph(n={n})",
        )
    return rp


def objective_counterpart_B(
    net: FluidNetwork,
    uset: UncertaintySet,
    grid: TimeGrid,
    problem: Optional[RobustProblem] = None,
    arrival: Optional[UncertaintySet] = None,
) -> RobustProblem:
    """z_n ≥ Λ t_n + Σ_k c_k max_μ x_k(t_n), robustified buffer by buffer"""
    rp = _ensure_problem(problem, net, uset, grid, "B")
    rp.lambda_cost = _resolve_lambda(net, uset, arrival)
    _add_epigraph_columns(rp, net, grid)
    G, c, mu, mu_dev = net.G, net.c, net.mu, net.mu_dev
    ca = float(c @ net.alpha)
    times = grid.times
    for n in range(1, grid.num_intervals + 1):
        tag = f"epigraph(n={n})"
        coeffs = {rp.epigraph_columns[n]: 1.0}
        records = []
        for k in np.flatnonzero(c):
            terms = []
            for j in np.flatnonzero(G[k]):
                H = _cumulative(rp, grid, j, n)
                _accumulate(coeffs, H, c[k] * G[k, j] * mu[j])
                terms.append((int(j), float(G[k, j] * mu_dev[j]), H))
            records.append(
                _add_protection(
                    rp,
                    uset,
                    coeffs,
                    -float(c[k]),
                    terms,
                    f"epi_{n}_k{k}",
                    f"{tag}[k={k}]",
                    budget_pairs=True,
                )
            )
        row = rp.lp.add_row(
            coeffs, ">=", rp.lambda_cost * times[n] + ca, name=f"epi_{n}", tag=tag
        )
        for record in records:
            record.head = row
            rp.protections.append(record)
    return rp


def _add_effort_caps(rp: RobustProblem, net: FluidNetwork, grid: TimeGrid) -> None:
    for i in range(net.num_servers):
        flows = net.flows_of_server(i)
        for n in range(grid.num_intervals):
            rp.lp.add_row(
                {rp.control_columns[j][n]: 1.0 for j in flows},
                "<=",
                1.0,
                name=f"eff_{i}_{n}",
                tag=f"effort(i={i},n={n})",
            )


def build_robust_A(
    net: FluidNetwork,
    uset: UncertaintySet,
    grid: TimeGrid,
    arrival: Optional[UncertaintySet] = None,
) -> RobustProblem:
    rp = _new_problem(net, uset, grid, "A")
    objective_counterpart_A(net, uset, grid, rp, arrival)
    counterpart_balance_A(net, uset, grid, rp)
    counterpart_server_capacity_A(net, uset, grid, rp)
    logger.info(
        "built %s: %d columns, %d rows, Λ=%.6g",
        rp.lp.name,
        rp.lp.num_columns,
        rp.lp.num_rows,
        rp.lambda_cost,
    )
    return rp


def build_robust_B(
    net: FluidNetwork,
    uset: UncertaintySet,
    grid: TimeGrid,
    arrival: Optional[UncertaintySet] = None,
) -> RobustProblem:
    rp = _new_problem(net, uset, grid, "B")
    objective_counterpart_B(net, uset, grid, rp, arrival)
    counterpart_balance_B(net, uset, grid, rp)
    _add_effort_caps(rp, net, grid)
    logger.info(
        "built %s: %d columns, %d rows, Λ=%.6g",
        rp.lp.name,
        rp.lp.num_columns,
        rp.lp.num_rows,
        rp.lambda_cost,
    )
    return rp


def protection_oracle(
    rp: RobustProblem,
    tag: str,
    ctrl: PiecewiseControl,
    tolerances: Optional[SolverTolerances] = None,
) -> float:
    """Minimum of the protection term of one head row over its auxiliaries, control fixed"""
    record = rp.protection_of(tag)
    values = rp.control_values(ctrl)
    fixed = sum(a * values[col] for col, a in record.fixed.items())
    if not record.aux:
        return float(fixed)

    sub = LpProblem(name=f"oracle_{tag}")
    index: Dict[int, int] = {}

    def column(col: int) -> int:
        if col not in index:
            source = rp.lp.columns[col]
            if col in values:
                index[col] = sub.add_column(
                    source.name, lower=values[col], upper=values[col]
                )
            else:
                index[col] = sub.add_column(
                    source.name, lower=source.lower, upper=source.upper
                )
        return index[col]

    for col, a in record.aux.items():
        sub.columns[column(col)] = sub.columns[column(col)].model_copy(
            update={"cost": float(a)}
        )
    for r in record.support:
        row = rp.lp.rows[r]
        sub.add_row(
            {column(col): a for col, a in row.coeffs.items()},
            row.relation,
            row.rhs,
            name=row.name,
        )
    sol = solve_lp(sub, tolerances)
    if not sol.is_optimal:
        raise LpError(f"protection oracle for {tag} is {sol.status}")
    return float(fixed + sol.objective)


def extract_control(rp: RobustProblem, solution: LpSolution) -> PiecewiseControl:
    if not solution.is_optimal:
        raise LpError(f"cannot extract a control from a {solution.status} solution")
    x = np.asarray(solution.x)
    values = np.maximum(x[np.asarray(rp.control_columns)], 0.0)
    return PiecewiseControl(grid=rp.grid, values=values.tolist(), kind=rp.control_kind)


def solve_robust(
    rp: RobustProblem, tolerances: Optional[SolverTolerances] = None
) -> Tuple[PiecewiseControl, LpSolution]:
    solution = solve_lp(rp.lp, tolerances)
    if not solution.is_optimal:
        raise LpError(f"robust problem {rp.lp.name} is {solution.status}")
    logger.info(
        "%s optimal: objective %.10g after %d pivots",
        rp.lp.name,
        solution.objective,
        solution.iterations,
    )
    return extract_control(rp, solution), solution


def evaluate_control(
    rp: RobustProblem,
    ctrl: PiecewiseControl,
    tolerances: Optional[SolverTolerances] = None,
) -> LpSolution:
    """Solve `rp` with its control columns fixed to `ctrl`"""
    if ctrl.kind != rp.control_kind:
        raise RobustBuildError(
            f"{ctrl.kind} control cannot be evaluated in a model {rp.model} problem"
        )
    return solve_lp(with_fixed_columns(rp.lp, rp.control_values(ctrl)), tolerances)
