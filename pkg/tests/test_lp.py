import itertools

import numpy as np
import pytest

from robust_fluidnet.lp import (
    INF,
    IterationLimitError,
    LpError,
    LpProblem,
    SolverTolerances,
    duality_gap,
    primal_residual,
    solve_lp,
    with_fixed_columns,
)


def dense_problem(c, A, relations, b, name="dense"):
    p = LpProblem(name=name)
    for j, cost in enumerate(c):
        p.add_column(f"x{j}", cost=float(cost))
    for row, rel, rhs in zip(A, relations, b):
        p.add_row({j: float(a) for j, a in enumerate(row)}, rel, float(rhs))
    return p


def brute_force_min(c, A, b):
    """min c·x over {Ax <= b, x >= 0} by enumerating bases of [A | I]"""
    m, n = A.shape
    full = np.hstack([A, np.eye(m)])
    cost = np.concatenate([c, np.zeros(m)])
    best = np.inf
    for cols in itertools.combinations(range(n + m), m):
        B = full[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b)
        if np.any(xb < -1e-9):
            continue
        best = min(best, float(cost[list(cols)] @ xb))
    return best


def test_single_variable_maximum():
    p = LpProblem()
    x = p.add_column("x", cost=-1.0)
    p.add_row({x: 1.0}, "<=", 1.0)
    sol = solve_lp(p)
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([1.0])
    assert sol.objective == pytest.approx(-1.0)


def test_contradictory_rows_are_infeasible():
    p = LpProblem()
    x = p.add_column("x")
    p.add_row({x: 1.0}, ">=", 2.0)
    p.add_row({x: 1.0}, "<=", 1.0)
    assert solve_lp(p).status == "infeasible"


def test_unbounded_direction_is_reported():
    p = LpProblem()
    x = p.add_column("x", cost=-1.0)
    y = p.add_column("y")
    p.add_row({x: 1.0, y: -1.0}, "<=", 1.0)
    assert solve_lp(p).status == "unbounded"


@pytest.mark.parametrize("seed", range(8))
def test_random_lp_matches_basis_enumeration(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    A = rng.uniform(0.1, 2.0, size=(3, 3))
    b = rng.uniform(1.0, 5.0, size=3)
    c = -rng.uniform(0.5, 3.0, size=3)
    sol = solve_lp(dense_problem(c, A, ["<="] * 3, b))
    assert sol.is_optimal
    assert sol.objective == pytest.approx(brute_force_min(c, A, b), abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_certificates_on_mixed_rows(seed):
    rng = np.random.Generator(np.random.PCG64(100 + seed))
    A = rng.uniform(0.2, 1.5, size=(3, 4))
    x0 = rng.uniform(0.5, 1.5, size=4)
    b = A @ x0
    c = rng.uniform(0.1, 2.0, size=4)
    p = dense_problem(c, A, ["=", ">=", "<="], b)
    sol = solve_lp(p)
    assert sol.is_optimal
    assert primal_residual(p, sol.x) <= 1e-7
    assert duality_gap(p, sol) <= 1e-6 * (1 + abs(sol.objective))
    # complementary slackness on inequality rows
    activity = p.constraint_matrix() @ np.asarray(sol.x)
    for row, act, y in zip(p.rows, activity, sol.duals):
        if row.relation != "=":
            assert abs(y * (act - row.rhs)) <= 1e-7


def test_bounds_are_honoured():
    p = LpProblem()
    x = p.add_column("x", lower=-INF, upper=3.0, cost=-2.0)
    y = p.add_column("y", lower=-2.0, upper=5.0, cost=1.0)
    z = p.add_column("z", lower=-INF, upper=INF, cost=1.0)
    p.add_row({z: 1.0, x: -1.0}, ">=", -10.0)
    sol = solve_lp(p)
    assert sol.is_optimal
    assert sol.x == pytest.approx([3.0, -2.0, -7.0])
    assert sol.objective == pytest.approx(-15.0)
    assert duality_gap(p, sol) <= 1e-9


def test_problem_without_rows():
    p = LpProblem()
    p.add_column("x", lower=-INF, upper=3.0, cost=-1.0)
    p.add_column("y", lower=1.0, cost=2.0)
    sol = solve_lp(p)
    assert sol.x == pytest.approx([3.0, 1.0])
    assert sol.objective == pytest.approx(-1.0)

    p.add_column("w", cost=-1.0)
    assert solve_lp(p).status == "unbounded"


def test_cycling_example_terminates():
    # Beale's example, degenerate at the origin
    c = [-0.75, 20.0, -0.5, 6.0]
    A = [[0.25, -8.0, -1.0, 9.0], [0.5, -12.0, -0.5, 3.0], [0.0, 0.0, 1.0, 0.0]]
    b = [0.0, 0.0, 1.0]
    for tol in (SolverTolerances(), SolverTolerances(bland_trigger=1)):
        sol = solve_lp(dense_problem(c, A, ["<="] * 3, b), tol)
        assert sol.objective == pytest.approx(-1.25, abs=1e-9)


def test_iteration_limit():
    p = dense_problem([-1.0, -1.0], [[1.0, 0.0], [0.0, 1.0]], ["<=", "<="], [1, 1])
    with pytest.raises(IterationLimitError):
        solve_lp(p, SolverTolerances(max_iterations=1))


def test_scaled_objective_keeps_basis():
    A = np.array([[1.0, 2.0, 1.0], [3.0, 1.0, 2.0], [1.0, 1.0, 3.0]])
    b = np.array([4.0, 6.0, 5.0])
    c = np.array([-2.0, -3.0, -1.0])
    base = solve_lp(dense_problem(c, A, ["<="] * 3, b))
    scaled = solve_lp(dense_problem(7.5 * c, A, ["<="] * 3, b))
    assert base.basis == scaled.basis
    assert scaled.objective == pytest.approx(7.5 * base.objective)


def test_solver_is_deterministic():
    rng = np.random.Generator(np.random.PCG64(7))
    A = rng.uniform(0.1, 2.0, size=(4, 5))
    p = dense_problem(-rng.uniform(1, 2, 5), A, ["<="] * 4, rng.uniform(1, 3, 4))
    assert solve_lp(p).model_dump() == solve_lp(p).model_dump()


def test_fixed_columns():
    p = dense_problem([1.0, 1.0], [[1.0, 1.0]], [">="], [3.0])
    fixed = with_fixed_columns(p, {0: 2.5})
    sol = solve_lp(fixed)
    assert sol.x == pytest.approx([2.5, 0.5])
    assert p.columns[0].upper == INF


def test_problem_construction_errors():
    p = LpProblem()
    p.add_column("x")
    with pytest.raises(LpError):
        p.add_column("x")
    with pytest.raises(LpError):
        p.add_row({3: 1.0}, "<=", 1.0)
    with pytest.raises(LpError):
        p.column_index("nope")
    with pytest.raises(ValueError):
        p.add_column("y", lower=2.0, upper=1.0)


def test_duality_gap_needs_optimal_solution():
    p = LpProblem()
    x = p.add_column("x")
    p.add_row({x: 1.0}, ">=", 2.0)
    p.add_row({x: 1.0}, "<=", 1.0)
    with pytest.raises(LpError):
        duality_gap(p, solve_lp(p))
