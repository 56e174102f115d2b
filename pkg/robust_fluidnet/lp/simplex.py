"""Two-phase revised primal simplex.

The LP is brought to standard form ``min c'x  s.t.  Ax = b, x >= 0, b >= 0``:

- a column with a finite lower bound is shifted (x = lo + x'); a finite upper
  bound on top of it becomes an extra ``x' <= hi - lo`` row,
- a column bounded only above is mirrored (x = hi - x'),
- a free column is split (x = x+ - x-),
- a fixed column (lo == hi) is substituted out,
- inequality rows get a slack, rows with a negative right-hand side are negated.

Rows whose slack enters with +1 start with the slack basic, every other row gets
an artificial column. Phase 1 minimises the sum of artificials, phase 2 the real
objective. The basis inverse is kept dense, updated in product form after every
pivot and recomputed from scratch every ``refactor_every`` pivots.

Pricing is Dantzig's (most negative reduced cost). After ``bland_trigger``
consecutive degenerate pivots the solver switches to Bland's smallest-index rule
until the next non-degenerate step.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse

from .problem import (
    IllConditionedError,
    IterationLimitError,
    LpProblem,
    LpSolution,
    SolverTolerances,
)

logger = logging.getLogger(__name__)


class _StandardForm:
    def __init__(self, problem: LpProblem):
        n = problem.num_columns
        lo, hi = problem.bounds()
        cost = problem.cost_vector()
        A = problem.constraint_matrix().tocsc()
        b = problem.rhs_vector()

        self.problem = problem
        self.offset = np.zeros(n)
        # std column -> (original column, sign)
        self.origin: List[Tuple[int, float]] = []
        bound_rows = []
        for j in range(n):
            if lo[j] == hi[j]:
                self.offset[j] = lo[j]
            elif np.isfinite(lo[j]):
                self.offset[j] = lo[j]
                self.origin.append((j, 1.0))
                if np.isfinite(hi[j]):
                    bound_rows.append((len(self.origin) - 1, hi[j] - lo[j]))
            elif np.isfinite(hi[j]):
                self.offset[j] = hi[j]
                self.origin.append((j, -1.0))
            else:
                self.origin.append((j, 1.0))
                self.origin.append((j, -1.0))

        n_std = len(self.origin)
        T = sparse.csc_matrix(
            (
                [s for _, s in self.origin],
                ([j for j, _ in self.origin], list(range(n_std))),
            ),
            shape=(n, n_std),
        )
        m0 = problem.num_rows
        rhs = b - (A @ self.offset if m0 else np.zeros(0))
        struct = (A @ T).tocsr() if m0 else sparse.csr_matrix((0, n_std))

        relations = [row.relation for row in problem.rows]
        nb = len(bound_rows)
        if nb:
            bound_block = sparse.csr_matrix(
                (np.ones(nb), ([k for k in range(nb)], [c for c, _ in bound_rows])),
                shape=(nb, n_std),
            )
            struct = sparse.vstack([struct, bound_block]).tocsr()
            rhs = np.concatenate([rhs, [u for _, u in bound_rows]])
            relations += ["<="] * nb
        m = m0 + nb

        slack_rows, slack_signs = [], []
        for i, rel in enumerate(relations):
            if rel == "<=":
                slack_rows.append(i)
                slack_signs.append(1.0)
            elif rel == ">=":
                slack_rows.append(i)
                slack_signs.append(-1.0)
        n_slack = len(slack_rows)
        slack_block = sparse.csr_matrix(
            (slack_signs, (slack_rows, list(range(n_slack)))), shape=(m, n_slack)
        )

        flip = np.where(rhs < 0, -1.0, 1.0)
        rhs = rhs * flip
        if m:
            core = sparse.diags(flip) @ sparse.hstack([struct, slack_block]).tocsr()
            core = core.tocsc()
        else:
            core = sparse.csc_matrix((0, n_std + n_slack))

        basis = np.full(m, -1, dtype=int)
        for k, r in enumerate(slack_rows):
            if slack_signs[k] * flip[r] > 0:
                basis[r] = n_std + k
        art_rows = np.flatnonzero(basis < 0)
        n_core = n_std + n_slack
        art_block = sparse.csc_matrix(
            (np.ones(art_rows.size), (art_rows, np.arange(art_rows.size))),
            shape=(m, art_rows.size),
        )
        basis[art_rows] = n_core + np.arange(art_rows.size)

        self.A = sparse.hstack([core, art_block]).tocsc() if art_rows.size else core
        self.A_T = self.A.T.tocsr()
        self.b = rhs
        self.flip = flip
        self.m, self.m0 = m, m0
        self.n_std, self.n_core = n_std, n_core
        self.n_total = n_core + art_rows.size
        self.art_rows = art_rows
        self.initial_basis = basis
        self.slack_rows = slack_rows
        self.bound_rows = bound_rows

        self.cost = np.zeros(self.n_total)
        for k, (j, s) in enumerate(self.origin):
            self.cost[k] = s * cost[j]

    def column_label(self, k: int) -> str:
        if k < self.n_std:
            j, s = self.origin[k]
            return f"x:{self.problem.columns[j].name}{'+' if s > 0 else '-'}"
        if k < self.n_core:
            r = self.slack_rows[k - self.n_std]
            return f"s:{self._row_label(r)}"
        r = self.art_rows[k - self.n_core]
        return f"a:{self._row_label(r)}"

    def _row_label(self, r: int) -> str:
        if r < self.m0:
            return self.problem.rows[r].name
        j, _ = self.origin[self.bound_rows[r - self.m0][0]]
        return f"bound_{self.problem.columns[j].name}"

    def recover(self, x_std: np.ndarray) -> np.ndarray:
        x = self.offset.copy()
        for k, (j, s) in enumerate(self.origin):
            x[j] += s * x_std[k]
        return x


class _Simplex:
    def __init__(self, form: _StandardForm, tol: SolverTolerances):
        self.form = form
        self.tol = tol
        self.basis = form.initial_basis.copy()
        self.pivots = 0
        self.iterations = 0
        self.refactor()

    def column(self, q: int) -> np.ndarray:
        return self.form.A[:, q].toarray().ravel()

    def refactor(self):
        m = self.form.m
        if m == 0:
            self.binv = np.zeros((0, 0))
            self.xb = np.zeros(0)
            return
        B = self.form.A[:, self.basis].toarray()
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise IllConditionedError("basis matrix became singular")
        xb = self.binv @ self.form.b
        scale = 1.0 + float(np.max(np.abs(self.form.b), initial=0.0))
        if np.any(xb < -1e-6 * scale):
            raise IllConditionedError(
                f"lost primal feasibility after refactorisation (min {xb.min():.3e})"
            )
        self.xb = np.maximum(xb, 0.0)

    def run(self, cost: np.ndarray, eligible: np.ndarray, phase: int) -> str:
        tol = self.tol
        bland = False
        streak = 0
        for _ in range(tol.max_iterations):
            y = cost[self.basis] @ self.binv
            d = cost - self.form.A_T @ y
            d[self.basis] = 0.0
            candidates = np.flatnonzero(eligible & (d < -tol.optimality))
            if candidates.size == 0:
                return "optimal"
            q = candidates[0] if bland else candidates[np.argmin(d[candidates])]
            alpha = self.binv @ self.column(q)
            positive = np.flatnonzero(alpha > tol.feasibility)
            if positive.size == 0:
                if np.any(alpha > tol.pivot):
                    raise IllConditionedError(
                        f"phase {phase}: only tiny pivot candidates for column {q}"
                    )
                return "unbounded"
            ratios = self.xb[positive] / alpha[positive]
            ties = positive[ratios <= ratios.min() + tol.feasibility]
            if bland:
                r = ties[np.argmin(self.basis[ties])]
            else:
                r = ties[np.argmax(alpha[ties])]
            theta = self._pivot(r, q, alpha)
            self.iterations += 1

            if theta <= tol.feasibility:
                streak += 1
                if not bland and streak >= tol.bland_trigger:
                    logger.debug(
                        "phase %d: %d degenerate pivots, switching to Bland's rule",
                        phase,
                        streak,
                    )
                    bland = True
            else:
                streak = 0
                bland = False
        raise IterationLimitError(
            f"phase {phase} did not finish within {tol.max_iterations} pivots"
        )

    def _pivot(self, r: int, q: int, alpha: np.ndarray) -> float:
        pivot = alpha[r]
        if abs(pivot) < self.tol.pivot:
            raise IllConditionedError(f"pivot {pivot:.3e} below tolerance")
        theta = max(self.xb[r] / pivot, 0.0)
        self.xb -= theta * alpha
        self.xb[r] = theta
        np.maximum(self.xb, 0.0, out=self.xb)
        row = self.binv[r] / pivot
        self.binv -= np.outer(alpha, row)
        self.binv[r] = row
        self.basis[r] = q
        self.pivots += 1
        if self.pivots % self.tol.refactor_every == 0:
            self.refactor()
        return theta

    def drive_out_artificials(self):
        form = self.form
        for r in range(form.m):
            if self.basis[r] < form.n_core:
                continue
            row = form.A_T @ self.binv[r]
            row[form.n_core :] = 0.0
            row[self.basis[self.basis < form.n_core]] = 0.0
            q = int(np.argmax(np.abs(row)))
            if abs(row[q]) <= 1e-7:
                # redundant row: the artificial stays basic at zero
                continue
            self._pivot(r, q, self.binv @ self.column(q))


def solve_lp(
    problem: LpProblem, tolerances: Optional[SolverTolerances] = None
) -> LpSolution:
    """Solve ``problem`` (minimisation) with the two-phase revised simplex.

    Returns an LpSolution whose status is optimal, infeasible or unbounded.
    Raises IllConditionedError on numerical breakdown and IterationLimitError
    when the pivot budget is exhausted.
    """
    tol = tolerances or SolverTolerances()
    form = _StandardForm(problem)
    logger.debug(
        "solving %s: %d rows, %d columns (%d std, %d artificial)",
        problem.name,
        form.m,
        problem.num_columns,
        form.n_std,
        form.art_rows.size,
    )

    if form.m == 0:
        if np.any(form.cost[: form.n_std] < -tol.optimality):
            return LpSolution(status="unbounded")
        x = form.recover(np.zeros(form.n_std))
        objective = float(problem.cost_vector() @ x)
        return LpSolution(
            status="optimal",
            x=x.tolist(),
            objective=objective,
            reduced_costs=problem.cost_vector().tolist(),
            dual_objective=objective,
        )

    simplex = _Simplex(form, tol)
    is_art = np.arange(form.n_total) >= form.n_core

    if form.art_rows.size:
        phase1_cost = is_art.astype(float)
        simplex.run(phase1_cost, ~is_art, phase=1)
        infeasibility = float(phase1_cost[simplex.basis] @ simplex.xb)
        scale = max(1.0, float(np.max(np.abs(form.b))))
        if infeasibility > 100 * tol.feasibility * scale:
            logger.debug("phase 1 ended with infeasibility %.3e", infeasibility)
            return LpSolution(status="infeasible", iterations=simplex.iterations)
        simplex.drive_out_artificials()

    status = simplex.run(form.cost, ~is_art, phase=2)
    if status == "unbounded":
        return LpSolution(status="unbounded", iterations=simplex.iterations)

    x_std = np.zeros(form.n_total)
    x_std[simplex.basis] = simplex.xb
    x = form.recover(x_std[: form.n_std])

    y_std = form.cost[simplex.basis] @ simplex.binv
    duals = y_std[: form.m0] * form.flip[: form.m0]
    c = problem.cost_vector()
    A = problem.constraint_matrix()
    reduced = c - (A.T @ duals if form.m0 else np.zeros_like(c))
    lo, hi = problem.bounds()
    bound_term = 0.0
    for j, rc in enumerate(reduced):
        if rc > 0 and np.isfinite(lo[j]):
            bound_term += rc * lo[j]
        elif rc < 0 and np.isfinite(hi[j]):
            bound_term += rc * hi[j]
        else:
            bound_term += rc * x[j]
    dual_objective = float(problem.rhs_vector() @ duals) + bound_term

    logger.debug(
        "%s optimal after %d pivots, objective %.10g",
        problem.name,
        simplex.iterations,
        float(c @ x),
    )
    return LpSolution(
        status="optimal",
        x=x.tolist(),
        objective=float(c @ x),
        duals=duals.tolist(),
        reduced_costs=reduced.tolist(),
        dual_objective=dual_objective,
        basis=sorted(form.column_label(k) for k in simplex.basis),
        iterations=simplex.iterations,
    )
