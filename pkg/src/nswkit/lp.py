"""Dense linear programs with dual certificates.

Every LP here is a maximization.  Solving is delegated to the HiGHS dual
simplex shipped with scipy, which is deterministic for fixed input.  The
returned duals are re-checked here, and ``certified_upper_bound`` turns any
sign-correct dual vector into a weak-duality bound that does not trust the
solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

RELATIONS = ("<=", "=", ">=")


@dataclass(frozen=True)
class Row:
    coeffs: np.ndarray
    relation: str
    rhs: float


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """max c.x  subject to  A x (<=|=|>=) b,  lb <= x <= ub."""

    c: np.ndarray
    rows: Sequence[Row] = ()
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    A: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)
    senses: tuple = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        n = len(c)
        A = np.array([np.asarray(r.coeffs, dtype=float) for r in self.rows]).reshape(len(self.rows), n)
        b = np.array([float(r.rhs) for r in self.rows])
        senses = tuple(r.relation for r in self.rows)
        if any(s not in RELATIONS for s in senses):
            raise ValueError(f"relations must be one of {RELATIONS}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("LP data must be finite")
        lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float)
        ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        for name, val in (("c", c), ("A", A), ("b", b), ("lb", lb), ("ub", ub), ("senses", senses)):
            object.__setattr__(self, name, val)

    @classmethod
    def from_matrix(cls, c, A, senses, b, lb=None, ub=None) -> "LinearProgram":
        rows = [Row(A[i], senses[i], b[i]) for i in range(len(b))]
        return cls(np.asarray(c, dtype=float), rows, lb, ub)

    @property
    def num_vars(self) -> int:
        return len(self.c)


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | error
    primal: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    objective: float = float("nan")
    message: str = ""


class CertificationError(RuntimeError):
    pass


def _bound_terms(d: np.ndarray, lb: np.ndarray, ub: np.ndarray):
    """max over lb <= x <= ub of d.x, per coordinate (inf where unbounded)."""
    out = np.zeros_like(d)
    pos, neg = d > 0, d < 0
    with np.errstate(invalid="ignore"):
        out[pos] = d[pos] * ub[pos]
        out[neg] = d[neg] * lb[neg]
    return out


def dual_objective(lp: LinearProgram, y: np.ndarray) -> float:
    d = lp.c - lp.A.T @ y
    return float(lp.b @ y + _bound_terms(d, lp.lb, lp.ub).sum())


def _sign_violation(lp: LinearProgram, y: np.ndarray) -> np.ndarray:
    s = np.array(lp.senses)
    v = np.zeros(len(y))
    v[s == "<="] = np.maximum(-y[s == "<="], 0)
    v[s == ">="] = np.maximum(y[s == ">="], 0)
    return v


def solve_lp(lp: LinearProgram, tol_feas: float = 1e-8, tol_gap: float = 1e-7) -> LpSolution:
    s = np.array(lp.senses)
    le, ge, eq = s == "<=", s == ">=", s == "="
    A_ub = np.vstack([lp.A[le], -lp.A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if A_ub is not None else None
    A_eq = lp.A[eq] if eq.any() else None
    b_eq = lp.b[eq] if eq.any() else None
    bounds = list(zip(np.where(np.isfinite(lp.lb), lp.lb, -np.inf), lp.ub))
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi) for lo, hi in bounds]
    res = linprog(-lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        return LpSolution("infeasible", message=res.message)
    if res.status == 3:
        return LpSolution("unbounded", message=res.message)
    if res.status != 0:
        return LpSolution("error", message=res.message)
    x = np.asarray(res.x, dtype=float)
    y = np.zeros(len(lp.b))
    n_le = int(le.sum())
    if A_ub is not None:
        mu = -np.asarray(res.ineqlin.marginals)
        y[le] = mu[:n_le]
        y[ge] = -mu[n_le:]
    if A_eq is not None:
        y[eq] = -np.asarray(res.eqlin.marginals)
    obj = float(lp.c @ x)
    sol = LpSolution("optimal", x, y, obj)
    problem = _check_optimality(lp, x, y, tol_feas, tol_gap)
    if problem:
        sol.status = "error"
        sol.message = problem
    return sol


def _check_optimality(lp, x, y, tol_feas, tol_gap) -> str:
    ax = lp.A @ x
    scale = 1.0 + np.abs(lp.b) + np.abs(lp.A) @ np.abs(x)
    s = np.array(lp.senses)
    resid = np.where(s == "<=", ax - lp.b, np.where(s == ">=", lp.b - ax, np.abs(ax - lp.b)))
    if np.any(resid > tol_feas * scale):
        return f"primal infeasible by {resid.max():.3e}"
    if np.any(x < lp.lb - tol_feas * (1 + np.abs(lp.lb))) or np.any(x > lp.ub + tol_feas * (1 + np.abs(x))):
        return "variable bounds violated"
    if np.any(_sign_violation(lp, y) > tol_feas * (1 + np.abs(y))):
        return "dual sign violated"
    d = lp.c - lp.A.T @ y
    dscale = 1.0 + np.abs(lp.c) + np.abs(lp.A).T @ np.abs(y)
    bad = ((d > tol_feas * dscale) & ~np.isfinite(lp.ub)) | ((d < -tol_feas * dscale) & ~np.isfinite(lp.lb))
    if np.any(bad):
        return "dual infeasible"
    d_clip = np.where(np.abs(d) <= tol_feas * dscale, 0.0, d)
    dual_obj = float(lp.b @ y + _bound_terms(d_clip, lp.lb, lp.ub).sum())
    primal_obj = float(lp.c @ x)
    if abs(dual_obj - primal_obj) > tol_gap * (1 + abs(primal_obj)):
        return f"duality gap {abs(dual_obj - primal_obj):.3e}"
    return ""


def certified_upper_bound(lp: LinearProgram, tol_feas: float = 1e-9, dual: Optional[np.ndarray] = None) -> float:
    """Weak-duality upper bound on max c.x from a re-verified dual vector.

    The dual (solved for when not supplied) must have the right sign on every
    row up to ``tol_feas``; wrong-signed entries are then zeroed.  Reduced
    costs d = c - A^T y are recomputed; a positive d_j on a variable without
    finite upper bound (or a negative one without finite lower bound) larger
    than ``tol_feas`` aborts.  The bound is b.y plus the exact box terms plus
    ``tol_feas * (1 + sum |b|)``, which absorbs the tolerated reduced costs for
    every LP whose feasible points have sum x <= 1 + sum |b|.
    """
    if dual is None:
        sol = solve_lp(lp)
        if sol.status != "optimal":
            raise CertificationError(f"LP solve failed: {sol.status} {sol.message}")
        dual = sol.dual
    y = np.asarray(dual, dtype=float).copy()
    if y.shape != lp.b.shape or not np.all(np.isfinite(y)):
        raise CertificationError("dual vector has wrong shape or non-finite entries")
    if np.any(_sign_violation(lp, y) > tol_feas):
        raise CertificationError("dual sign check failed")
    s = np.array(lp.senses)
    y[(s == "<=") & (y < 0)] = 0.0
    y[(s == ">=") & (y > 0)] = 0.0
    d = lp.c - lp.A.T @ y
    bad = ((d > tol_feas) & ~np.isfinite(lp.ub)) | ((d < -tol_feas) & ~np.isfinite(lp.lb))
    if np.any(bad):
        j = int(np.argmax(np.where(bad, np.abs(d), -1)))
        raise CertificationError(f"dual feasibility check failed at column {j}: reduced cost {d[j]:.3e}")
    d = np.where(bad | ((d > 0) & ~np.isfinite(lp.ub)) | ((d < 0) & ~np.isfinite(lp.lb)), 0.0, d)
    return float(lp.b @ y + _bound_terms(d, lp.lb, lp.ub).sum() + tol_feas * (1.0 + np.abs(lp.b).sum()))
