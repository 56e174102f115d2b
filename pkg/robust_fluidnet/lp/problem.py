import math
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr, field_validator, model_validator
from scipy import sparse

Relation = Literal["<=", ">=", "="]
Status = Literal["optimal", "infeasible", "unbounded"]

INF = math.inf


class LpError(Exception):
    """Custom exception for linear-program construction and solver errors"""

    pass


class IllConditionedError(LpError):
    """Raised when a pivot or basis factorisation breaks down numerically"""

    pass


class IterationLimitError(LpError):
    """Raised when the simplex exceeds its iteration budget"""

    pass


class SolverTolerances(BaseModel):
    """Every numerical threshold the simplex uses, in one place"""

    model_config = {"frozen": True}

    feasibility: float = Field(1e-9, gt=0, description="Primal feasibility tolerance")
    optimality: float = Field(1e-9, gt=0, description="Reduced-cost tolerance")
    pivot: float = Field(1e-11, gt=0, description="Smallest acceptable pivot")
    refactor_every: int = Field(50, ge=1, description="Pivots between refactorisations")
    bland_trigger: int = Field(
        50, ge=1, description="Consecutive degenerate pivots before Bland's rule"
    )
    max_iterations: int = Field(200000, ge=1, description="Pivot cap per phase")


class LpColumn(BaseModel):
    name: str = Field(..., min_length=1, pattern=r"^[A-Za-z_][A-Za-z0-9_.]*$")
    lower: float = 0.0
    upper: float = INF
    cost: float = 0.0

    @model_validator(mode="after")
    def validate_bounds(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError(f"column {self.name}: NaN bound")
        if self.lower > self.upper:
            raise ValueError(
                f"column {self.name}: lower bound {self.lower} "
                f"exceeds upper {self.upper}"
            )
        if self.lower == INF or self.upper == -INF:
            raise ValueError(f"column {self.name}: bounds exclude every finite value")
        return self


class LpRow(BaseModel):
    name: str = Field(..., min_length=1, pattern=r"^[A-Za-z_][A-Za-z0-9_.]*$")
    coeffs: Dict[int, float]
    relation: Relation
    rhs: float
    tag: Optional[str] = None

    @field_validator("rhs")
    def validate_rhs(cls, v):
        if not math.isfinite(v):
            raise ValueError("right-hand side must be finite")
        return v


class LpProblem(BaseModel):
    """Sparse minimisation LP with named columns and annotated rows"""

    name: str = "lp"
    columns: List[LpColumn] = []
    rows: List[LpRow] = []

    _index: Dict[str, int] = PrivateAttr(default_factory=dict)
    _row_names: set = PrivateAttr(default_factory=set)

    def model_post_init(self, __context) -> None:
        self._index = {}
        for j, col in enumerate(self.columns):
            if col.name in self._index:
                raise ValueError(f"duplicate column name {col.name}")
            self._index[col.name] = j
        self._row_names = set()
        for row in self.rows:
            if row.name in self._row_names:
                raise ValueError(f"duplicate row name {row.name}")
            self._row_names.add(row.name)
            for j in row.coeffs:
                if not 0 <= j < len(self.columns):
                    raise ValueError(f"row {row.name}: column index {j} out of range")

    @property
    def num_columns(self) -> int:
        return len(self.columns)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_column(
        self, name: str, lower: float = 0.0, upper: float = INF, cost: float = 0.0
    ) -> int:
        if name in self._index:
            raise LpError(f"duplicate column name {name}")
        self.columns.append(LpColumn(name=name, lower=lower, upper=upper, cost=cost))
        self._index[name] = len(self.columns) - 1
        return len(self.columns) - 1

    def add_row(
        self,
        coeffs: Dict[int, float],
        relation: Relation,
        rhs: float,
        name: Optional[str] = None,
        tag: Optional[str] = None,
    ) -> int:
        name = name or f"r{len(self.rows) + 1}"
        if name in self._row_names:
            raise LpError(f"duplicate row name {name}")
        clean = {}
        for j, a in coeffs.items():
            if not 0 <= j < len(self.columns):
                raise LpError(f"row {name}: column index {j} out of range")
            if a != 0.0:
                clean[int(j)] = float(a)
        self.rows.append(
            LpRow(name=name, coeffs=clean, relation=relation, rhs=rhs, tag=tag)
        )
        self._row_names.add(name)
        return len(self.rows) - 1

    def column_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LpError(f"unknown column {name}")

    def rows_tagged(self, prefix: str) -> List[int]:
        return [
            r
            for r, row in enumerate(self.rows)
            if row.tag and row.tag.startswith(prefix)
        ]

    def cost_vector(self) -> np.ndarray:
        return np.array([c.cost for c in self.columns], dtype=float)

    def bounds(self):
        lo = np.array([c.lower for c in self.columns], dtype=float)
        hi = np.array([c.upper for c in self.columns], dtype=float)
        return lo, hi

    def rhs_vector(self) -> np.ndarray:
        return np.array([row.rhs for row in self.rows], dtype=float)

    def constraint_matrix(self) -> sparse.csr_matrix:
        data, indices, indptr = [], [], [0]
        for row in self.rows:
            indices.extend(row.coeffs.keys())
            data.extend(row.coeffs.values())
            indptr.append(len(indices))
        return sparse.csr_matrix(
            (np.array(data, dtype=float), np.array(indices, dtype=int), indptr),
            shape=(len(self.rows), len(self.columns)),
        )

    def copy_problem(self) -> "LpProblem":
        return LpProblem(
            name=self.name,
            columns=[c.model_copy() for c in self.columns],
            rows=[r.model_copy(update={"coeffs": dict(r.coeffs)}) for r in self.rows],
        )


class LpSolution(BaseModel):
    status: Status
    x: List[float] = []
    objective: Optional[float] = None
    duals: List[float] = []
    reduced_costs: List[float] = []
    dual_objective: Optional[float] = None
    basis: List[str] = []
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def primal_residual(problem: LpProblem, x: Sequence[float]) -> float:
    """Largest violation of any row or bound by `x`"""
    x = np.asarray(x, dtype=float)
    worst = 0.0
    if problem.num_rows:
        activity = problem.constraint_matrix() @ x
        for row, act in zip(problem.rows, activity):
            if row.relation == "<=":
                worst = max(worst, act - row.rhs)
            elif row.relation == ">=":
                worst = max(worst, row.rhs - act)
            else:
                worst = max(worst, abs(act - row.rhs))
    lo, hi = problem.bounds()
    if x.size:
        worst = max(worst, float(np.max(lo - x)), float(np.max(x - hi)))
    return worst


def duality_gap(problem: LpProblem, solution: LpSolution) -> float:
    """|c·x − dual objective| for an optimal solution"""
    if not solution.is_optimal:
        raise LpError(f"duality gap undefined for status {solution.status}")
    return abs(solution.objective - solution.dual_objective)


def with_fixed_columns(problem: LpProblem, values: Dict[int, float]) -> LpProblem:
    """Copy of `problem` whose listed columns have lower = upper = value"""
    fixed = problem.copy_problem()
    for j, v in values.items():
        fixed.columns[j] = fixed.columns[j].model_copy(
            update={"lower": float(v), "upper": float(v)}
        )
    return fixed
