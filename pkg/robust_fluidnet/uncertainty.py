"""Perturbation sets and their exact worst-case oracles.

A set constrains a perturbation vector ζ of dimension L. Uncertain parameters
are written nominal ± deviation·ζ with the conventions

    τ_j = τ̄_j + τ̂_j ζ_j      (processing-rates model)
    μ_j = μ̄_j − μ̂_j ζ_j      (server-effort model)
    λ_k = λ̄_k + λ̂_k ξ_k      (arrivals)

so a positive coordinate always means slower service or more work.

Budgeted and one-sided sets carry explicit groups of coordinates (the flows of
one server); coordinates outside every group are only box bounded.
Polyhedral sets use the orientation {ζ : Dζ + d ≥ 0}.
"""

import logging
import math
from typing import TYPE_CHECKING, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr, model_validator

from .lp import INF, LpProblem, solve_lp

if TYPE_CHECKING:
    from .network_model import FluidNetwork

logger = logging.getLogger(__name__)

SetKind = Literal["box", "budgeted", "onesided", "polyhedral"]
Sense = Literal["max", "min"]


class UncertaintySetError(Exception):
    """Custom exception for malformed uncertainty sets and oracle misuse"""

    pass


class UnboundedSetError(UncertaintySetError):
    """Raised when a polyhedral set is unbounded in some coordinate"""

    pass


class EmptySetError(UncertaintySetError):
    """Raised when a polyhedral set has no points"""

    pass


class UncertaintySet(BaseModel):
    """Box, budgeted, one-sided budgeted or polyhedral perturbation set"""

    model_config = {"frozen": True}

    kind: SetKind
    dim: int = Field(..., ge=0, description="Number of perturbation coordinates")
    gamma: List[float] = Field([], description="Budget per group")
    groups: List[List[int]] = Field([], description="Coordinate indices per group")
    D: List[List[float]] = Field([], description="Polyhedron matrix, M x dim")
    d: List[float] = Field([], description="Polyhedron offset, M")

    _lo: Tuple[float, ...] = PrivateAttr(default=())
    _hi: Tuple[float, ...] = PrivateAttr(default=())

    @model_validator(mode="after")
    def validate_structure(self):
        if self.kind in ("budgeted", "onesided"):
            if len(self.gamma) != len(self.groups):
                raise ValueError(
                    f"{len(self.gamma)} budgets given for {len(self.groups)} groups"
                )
            seen = set()
            for g, (members, budget) in enumerate(zip(self.groups, self.gamma)):
                for ell in members:
                    if not 0 <= ell < self.dim:
                        raise ValueError(f"group {g}: coordinate {ell} out of range")
                    if ell in seen:
                        raise ValueError(f"coordinate {ell} appears in two groups")
                    seen.add(ell)
                if not 0 < budget <= len(members):
                    raise ValueError(
                        f"group {g}: budget {budget} outside (0, {len(members)}]"
                    )
        elif self.gamma or self.groups:
            raise ValueError(f"{self.kind} sets take no budgets")

        if self.kind == "polyhedral":
            if len(self.D) != len(self.d):
                raise ValueError(f"D has {len(self.D)} rows but d has {len(self.d)}")
            for m, row in enumerate(self.D):
                if len(row) != self.dim:
                    raise ValueError(
                        f"D row {m} has {len(row)} entries, expected {self.dim}"
                    )
            if not all(math.isfinite(v) for row in self.D for v in row) or not all(
                math.isfinite(v) for v in self.d
            ):
                raise ValueError("D and d must be finite")
        elif self.D or self.d:
            raise ValueError(f"{self.kind} sets take no polyhedron")
        self._set_bounds()
        return self

    def _set_bounds(self) -> None:
        if self.kind == "polyhedral":
            lo, hi = _polyhedron_bounds(self.D_matrix, self.d_vector)
            self._lo, self._hi = tuple(lo.tolist()), tuple(hi.tolist())
            return
        lo = np.full(self.dim, 0.0 if self.kind == "onesided" else -1.0)
        hi = np.ones(self.dim)
        for members, budget in zip(self.groups, self.gamma):
            hi[members] = min(1.0, budget)
            if self.kind == "budgeted":
                lo[members] = -min(1.0, budget)
        self._lo, self._hi = tuple(lo.tolist()), tuple(hi.tolist())

    @property
    def D_matrix(self) -> np.ndarray:
        return np.asarray(self.D, dtype=float).reshape(len(self.D), self.dim)

    @property
    def d_vector(self) -> np.ndarray:
        return np.asarray(self.d, dtype=float)

    @property
    def num_faces(self) -> int:
        return len(self.D)

    @classmethod
    def box(cls, dim: int) -> "UncertaintySet":
        return cls(kind="box", dim=dim)

    @classmethod
    def budgeted(
        cls, dim: int, gamma: List[float], groups: List[List[int]]
    ) -> "UncertaintySet":
        return cls(kind="budgeted", dim=dim, gamma=gamma, groups=groups)

    @classmethod
    def onesided(
        cls, dim: int, gamma: List[float], groups: List[List[int]]
    ) -> "UncertaintySet":
        return cls(kind="onesided", dim=dim, gamma=gamma, groups=groups)

    @classmethod
    def polyhedral(cls, D, d) -> "UncertaintySet":
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return cls(
            kind="polyhedral", dim=D.shape[1], D=D.tolist(), d=list(map(float, d))
        )


def _polyhedron_lp(D: np.ndarray, d: np.ndarray, objective: np.ndarray) -> LpProblem:
    p = LpProblem(name="polyhedron")
    for ell, c in enumerate(objective):
        p.add_column(f"zeta_{ell}", lower=-INF, upper=INF, cost=float(c))
    for m in range(D.shape[0]):
        p.add_row(
            {ell: D[m, ell] for ell in range(D.shape[1])},
            ">=",
            -float(d[m]),
            name=f"face_{m}",
        )
    return p


def _polyhedron_bounds(D: np.ndarray, d: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-coordinate extent of {ζ : Dζ + d ≥ 0}, two LPs per coordinate"""
    L = D.shape[1]
    lo, hi = np.zeros(L), np.zeros(L)
    for ell in range(L):
        for sign, out in ((1.0, lo), (-1.0, hi)):
            objective = np.zeros(L)
            objective[ell] = sign
            sol = solve_lp(_polyhedron_lp(D, d, objective))
            if sol.status == "infeasible":
                raise EmptySetError("polyhedral uncertainty set is empty")
            if sol.status == "unbounded":
                raise UnboundedSetError(
                    f"polyhedral uncertainty set is unbounded along coordinate {ell}"
                )
            out[ell] = sol.x[ell]
    logger.debug("polyhedron bounding box lo=%s hi=%s", lo, hi)
    return lo, hi


def bounding_box(uset: UncertaintySet) -> Tuple[np.ndarray, np.ndarray]:
    return np.array(uset._lo, dtype=float), np.array(uset._hi, dtype=float)


def _check_dim(uset: UncertaintySet, v: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.size != uset.dim:
        raise UncertaintySetError(f"{what} has dimension {v.size}, set has {uset.dim}")
    return v


def contains(uset: UncertaintySet, zeta, tol: float = 1e-9) -> bool:
    """True iff every defining inequality of the set holds at `zeta` within `tol`"""
    z = _check_dim(uset, zeta, "zeta")
    if uset.kind == "polyhedral":
        return bool(np.all(uset.D_matrix @ z + uset.d_vector >= -tol))
    if uset.kind == "onesided":
        if np.any(z < -tol) or np.any(z > 1 + tol):
            return False
        magnitude = z
    else:
        if np.any(np.abs(z) > 1 + tol):
            return False
        magnitude = np.abs(z)
    return all(
        magnitude[members].sum() <= budget + tol
        for members, budget in zip(uset.groups, uset.gamma)
    )


def _budget_vertex(a: np.ndarray, budget: float) -> np.ndarray:
    """Maximiser of a·w over {0 ≤ w ≤ 1, Σw ≤ budget} for a ≥ 0"""
    w = np.zeros(a.size)
    order = np.argsort(-a, kind="stable")
    full = int(math.floor(budget))
    w[order[:full]] = 1.0
    if full < a.size:
        w[order[full]] = budget - full
    w[a <= 0] = 0.0
    return w


def worst_case_linear(
    uset: UncertaintySet, coeffs, sense: Sense = "max"
) -> Tuple[float, np.ndarray]:
    """Exact optimum of coeffs·ζ over the set and an optimal ζ.

    Box and budget sets use the sort-based closed form (fractional budgets take
    a fraction of the next largest coordinate), polyhedral sets an LP.
    """
    a = _check_dim(uset, coeffs, "coeffs")
    if sense == "min":
        value, zeta = worst_case_linear(uset, -a, "max")
        return -value, zeta
    if sense != "max":
        raise UncertaintySetError(f"unknown sense {sense!r}")

    if uset.kind == "polyhedral":
        sol = solve_lp(_polyhedron_lp(uset.D_matrix, uset.d_vector, -a))
        if sol.status == "unbounded":
            raise UnboundedSetError("worst case unbounded over polyhedral set")
        if sol.status == "infeasible":
            raise EmptySetError("polyhedral uncertainty set is empty")
        zeta = np.asarray(sol.x)
        return float(a @ zeta), zeta

    if uset.kind == "onesided":
        magnitude = np.maximum(a, 0.0)
        direction = np.ones(a.size)
    else:
        magnitude = np.abs(a)
        direction = np.sign(a)

    weight = (magnitude > 0).astype(float)
    for members, budget in zip(uset.groups, uset.gamma):
        weight[members] = _budget_vertex(magnitude[members], budget)
    zeta = direction * weight
    zeta[zeta == 0] = 0.0
    return float(magnitude @ weight), zeta


def tau_box_to_mu_box(tau_nom, epsilon: float) -> Tuple[np.ndarray, np.ndarray]:
    """Service-rate midpoint and deviation whose interval is the inverse τ box.

    [μ̄ − μ̂, μ̄ + μ̂] = [1/((1+ε)τ̄), 1/((1−ε)τ̄)].
    """
    if not 0 <= epsilon < 1:
        raise UncertaintySetError(f"epsilon must lie in [0, 1), got {epsilon}")
    tau = np.asarray(tau_nom, dtype=float)
    if np.any(tau <= 0):
        raise UncertaintySetError("nominal service times must be positive")
    mu_nom = 1.0 / (tau * (1.0 - epsilon**2))
    return mu_nom, epsilon * mu_nom


def arrival_set(uset: UncertaintySet, num_buffers: int) -> UncertaintySet:
    """Arrival-rate set used for Λ when no explicit one is given"""
    if uset.kind in ("budgeted", "onesided") and num_buffers > 0:
        return UncertaintySet(
            kind=uset.kind,
            dim=num_buffers,
            gamma=[float(num_buffers)],
            groups=[list(range(num_buffers))],
        )
    return UncertaintySet.box(num_buffers)


def sample(
    uset: UncertaintySet, n: int, rng: np.random.Generator, max_batches: int = 200
) -> np.ndarray:
    """`n` points of the set as an n x L array"""
    L = uset.dim
    if uset.kind == "polyhedral":
        lo, hi = bounding_box(uset)
        accepted = []
        for _ in range(max_batches):
            batch = rng.uniform(lo, hi, size=(max(n, 64), L))
            inside = np.all(batch @ uset.D_matrix.T + uset.d_vector >= 0, axis=1)
            accepted.extend(batch[inside])
            if len(accepted) >= n:
                return np.asarray(accepted[:n]).reshape(n, L)
        raise UncertaintySetError(
            f"rejection sampling accepted only {len(accepted)} of {n} points"
        )

    low = 0.0 if uset.kind == "onesided" else -1.0
    points = rng.uniform(low, 1.0, size=(n, L))
    for members, budget in zip(uset.groups, uset.gamma):
        total = np.abs(points[:, members]).sum(axis=1)
        scale = np.where(total > budget, budget / np.maximum(total, 1e-300), 1.0)
        points[:, members] *= scale[:, None]
    return points


def uncertainty_from_json(
    data: dict, net: "FluidNetwork", target: Literal["service", "arrival"] = "service"
) -> UncertaintySet:
    """Bind an uncertainty JSON object to `net`.

    Service sets have one coordinate per flow and one budget group per server;
    arrival sets one coordinate per buffer and a single group. A scalar gamma is
    broadcast to every group and clipped to the group size.
    """
    try:
        kind = data["kind"]
    except (KeyError, TypeError):
        raise UncertaintySetError("uncertainty JSON needs a 'kind' field")
    if kind not in ("box", "budgeted", "onesided", "polyhedral"):
        raise UncertaintySetError(f"unknown uncertainty kind {kind!r}")

    if target == "service":
        dim = net.num_flows
        groups = [net.flows_of_server(i) for i in range(net.num_servers)]
        groups = [g for g in groups if g]
    else:
        dim = net.num_buffers
        groups = [list(range(dim))]

    if kind == "box":
        return UncertaintySet.box(dim)
    if kind == "polyhedral":
        if "D" not in data or "d" not in data:
            raise UncertaintySetError("polyhedral uncertainty needs 'D' and 'd'")
        D = np.atleast_2d(np.asarray(data["D"], dtype=float))
        if D.shape[1] != dim:
            raise UncertaintySetError(
                f"polyhedral D has {D.shape[1]} columns, {target} set needs {dim}"
            )
        return UncertaintySet.polyhedral(D, data["d"])

    gamma = _broadcast_gamma(data.get("gamma"), groups)
    return UncertaintySet(kind=kind, dim=dim, gamma=gamma, groups=groups)


def _broadcast_gamma(
    raw: Optional[Union[float, List[float]]], groups: List[List[int]]
) -> List[float]:
    if raw is None:
        raise UncertaintySetError("budgeted uncertainty needs 'gamma'")
    if isinstance(raw, (int, float)):
        return [min(float(raw), float(len(g))) for g in groups]
    if len(raw) == 1:
        return [min(float(raw[0]), float(len(g))) for g in groups]
    if len(raw) != len(groups):
        raise UncertaintySetError(
            f"gamma has {len(raw)} entries but there are {len(groups)} groups"
        )
    return [float(v) for v in raw]


def uncertainty_to_json(uset: UncertaintySet) -> dict:
    data = {"kind": uset.kind}
    if uset.kind in ("budgeted", "onesided"):
        data["gamma"] = list(uset.gamma)
    if uset.kind == "polyhedral":
        data["D"] = [list(row) for row in uset.D]
        data["d"] = list(uset.d)
    return data
