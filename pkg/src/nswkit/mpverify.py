"""Computer-assisted bound on the per-agent loss programs.

The worst-case loss of the rounding is the value of a small mathematical
program over a distribution of t (the normalized non-large value), with
parameters mu-bar, k and alpha.  For a box of parameters the program is
relaxed into an LP over bucket masses, and weak duality gives a bound that
does not depend on trusting the LP solver.  ``verify_region`` subdivides a
parameter region until every leaf box is certified below the target.

Two programs are supported: ``mp3`` (three parameters) and ``mp5`` (alpha
fixed to 0, right-hand side e/(e-1) mu).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import highspy
import numpy as np

from . import SPEC_VERSION
from .lp import CertificationError, LinearProgram, certified_upper_bound

E_RATIO = math.e / (math.e - 1.0)
L_LAMBDA = 60
CLAMP = 10000.0
LAMBDA_SLACK = 0.0001
LAMBDAS = np.log(1.0 - np.arange(1, L_LAMBDA + 1) / (L_LAMBDA + 1))
TARGET_MARGIN = 1e-12
CERT_TOL = 1e-9

MODES = ("mp3", "mp5")
SMALL_MU_MP3 = math.log(1.0 + E_RATIO**2)
SMALL_MU_MP5 = math.log(1.0 + E_RATIO)
LARGE_MU_MP3 = 3.6e5
LARGE_MU_MP5 = 1000.0
LARGE_MU_SLACK_MP3 = 0.015982
LARGE_MU_SLACK_MP5 = 0.280409


@dataclass(frozen=True)
class Mp3Box:
    mu_lo: float
    mu_hi: float
    k_lo: float
    k_hi: float
    alpha_lo: float = 0.0
    alpha_hi: float = 1.0
    l_t: int = 64
    l_lambda: int = L_LAMBDA

    def __post_init__(self):
        if not (0 <= self.mu_lo <= self.mu_hi):
            raise ValueError("need 0 <= mu_lo <= mu_hi")
        if not (1 <= self.k_lo <= self.k_hi):
            raise ValueError("need 1 <= k_lo <= k_hi")
        if not (0 <= self.alpha_lo <= self.alpha_hi <= 1):
            raise ValueError("need 0 <= alpha_lo <= alpha_hi <= 1")
        if self.l_t < 2:
            raise ValueError("l_t must be at least 2")
        if self.l_lambda != L_LAMBDA:
            raise ValueError(f"the lambda grid is fixed at {L_LAMBDA} points")

    def widths(self, mode: str = "mp3") -> tuple:
        """Relative widths used to choose the split (alpha is already in [0, 1])."""
        wm = (self.mu_hi - self.mu_lo) / self.mu_hi if self.mu_hi > 0 else 0.0
        wk = (self.k_hi - self.k_lo) / self.k_hi
        wa = self.alpha_hi - self.alpha_lo if mode == "mp3" else -1.0
        return wm, wk, wa

    def split(self, mode: str = "mp3", l_t_cap: int = 1024) -> tuple:
        w = self.widths(mode)
        dim = w.index(max(w))  # ties go to mu, then k, then alpha
        lt = min(l_t_cap, 2 * self.l_t)
        if dim == 0:
            mid = 0.5 * (self.mu_lo + self.mu_hi)
            return replace(self, mu_hi=mid, l_t=lt), replace(self, mu_lo=mid, l_t=lt)
        if dim == 1:
            mid = 0.5 * (self.k_lo + self.k_hi)
            return replace(self, k_hi=mid, l_t=lt), replace(self, k_lo=mid, l_t=lt)
        mid = 0.5 * (self.alpha_lo + self.alpha_hi)
        return replace(self, alpha_hi=mid, l_t=lt), replace(self, alpha_lo=mid, l_t=lt)

    def to_dict(self) -> dict:
        return {"mu": [self.mu_lo, self.mu_hi], "k": [self.k_lo, self.k_hi],
                "alpha": [self.alpha_lo, self.alpha_hi], "l_t": self.l_t}


def t_grid(box: Mp3Box) -> np.ndarray:
    """t_1 = 1, ..., t_{l_t + 1} = k_R, evenly spaced."""
    return np.linspace(1.0, box.k_hi, box.l_t + 1)


def lp_data(box: Mp3Box, mode: str = "mp3"):
    """Dense (c, A, b) of the bucket LP; every row is a <= row."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    t = t_grid(box)
    left, right = t[:-1], t[1:]
    c = np.maximum(math.log(box.k_hi) - np.log(left), 0.0)
    if mode == "mp3":
        expo = (np.expm1(LAMBDAS) * (1 - box.alpha_lo) * box.mu_lo
                + (LAMBDAS + LAMBDA_SLACK) * box.alpha_lo * box.mu_lo)
        rhs_k = E_RATIO * (1 - box.alpha_hi) * box.mu_hi + E_RATIO**2 * box.alpha_hi * box.mu_hi
    else:
        expo = np.expm1(LAMBDAS) * box.mu_lo
        rhs_k = E_RATIO * box.mu_hi
    A = np.empty((L_LAMBDA + 2, box.l_t))
    A[0] = 1.0
    with np.errstate(over="ignore"):  # overflow lands on the clamp anyway
        A[1:L_LAMBDA + 1] = np.minimum(CLAMP, np.exp(LAMBDAS[:, None] * right[None, :] - expo[:, None]))
    A[L_LAMBDA + 1] = np.maximum(box.k_lo - right, 0.0)
    b = np.ones(L_LAMBDA + 2)
    b[L_LAMBDA + 1] = rhs_k
    return c, A, b


def _as_lp(c, A, b) -> LinearProgram:
    return LinearProgram.from_matrix(c, A, ["<="] * len(b), b)


def build_mp32_lp(box: Mp3Box) -> LinearProgram:
    return _as_lp(*lp_data(box, "mp3"))


def build_mp5_lp(box: Mp3Box) -> LinearProgram:
    return _as_lp(*lp_data(box, "mp5"))


def build_lp(box: Mp3Box, mode: str) -> LinearProgram:
    return _as_lp(*lp_data(box, mode))


def _repair(c, A, b, y):
    """Make y >= 0 dual-feasible by lifting the sum(x) <= 1 row; return (y, bound)."""
    y = np.maximum(y, 0.0)
    d = c - A.T @ y
    y[0] += max(0.0, float(d.max()))
    return y, float(b @ y), d


class _RestrictedLp:
    """max c.x over a growing set of bucket columns, all rows <=.

    Kept as one HiGHS model so each added batch of columns is re-solved from
    the previous basis.  Only its duals are used, and those are re-checked
    against the full LP, so nothing here needs to be trusted.
    """

    def __init__(self, b: np.ndarray):
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("presolve", "off")
        self.h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        self.h.setOptionValue("dual_feasibility_tolerance", 1e-10)
        m = len(b)
        self.h.addRows(m, np.full(m, -highspy.kHighsInf), np.asarray(b, dtype=float), 0,
                       np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.int32), np.zeros(0))
        self.rows = np.arange(m, dtype=np.int32)

    def add(self, c: np.ndarray, A: np.ndarray):
        m, n = A.shape
        self.h.addCols(n, -np.asarray(c, dtype=float), np.zeros(n), np.full(n, highspy.kHighsInf), m * n,
                       np.arange(0, m * n, m, dtype=np.int32), np.tile(self.rows, n),
                       np.ascontiguousarray(A.T).ravel())

    def solve(self):
        """(primal, dual) with dual >= 0 in the max convention, or None."""
        self.h.run()
        if self.h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
            return None
        sol = self.h.getSolution()
        return np.array(sol.col_value), -np.array(sol.row_dual)


def dual_bound(c, A, b, target: Optional[float] = None, start: int = 24, add: int = 8, max_rounds: int = 60,
               hint: Optional[np.ndarray] = None, warm_cols=()):
    """Dual vector for the bucket LP by column generation.

    A restricted LP over a subset of buckets is solved; its row duals are
    made feasible for the full LP by raising the dual of the sum(x) <= 1 row
    (all-ones coefficients) by the largest positive reduced cost.  Any
    nonnegative ``hint`` (e.g. the parent box's dual) is tried first.  Stops
    as soon as the bound is below ``target`` or no column prices out.
    Returns (y, bound, lp_solves, support columns).
    """
    n = len(c)
    best_y, best = None, math.inf
    if hint is not None:
        best_y, best, _ = _repair(c, A, b, hint)
        if target is not None and best <= target:
            return best_y, best, 0, list(warm_cols)
    cols = set(np.linspace(0, n - 1, min(n, start)).astype(int).tolist())
    cols.update(int(j) for j in warm_cols if 0 <= j < n)
    cols = sorted(cols)
    rlp = _RestrictedLp(b)
    rlp.add(c[cols], A[:, cols])
    solves = 0
    support = []
    for _ in range(max_rounds):
        out = rlp.solve()
        solves += 1
        if out is None:
            break
        primal, dual = out
        y, bound, d = _repair(c, A, b, dual)
        if bound < best:
            best, best_y = bound, y
            support = sorted(cols[i] for i in np.nonzero(primal > 1e-12)[0])
        if target is not None and best <= target:
            break
        if d.max() <= 1e-9:
            break
        order = np.argsort(-d, kind="stable")[:add]
        chosen = set(cols)
        new = [int(i) for i in order if d[i] > 1e-9 and int(i) not in chosen]
        if not new:
            break
        cols.extend(new)  # insertion order matches the HiGHS column order
        rlp.add(c[new], A[:, new])
    if best_y is None:
        raise CertificationError("restricted LP failed")
    return best_y, best, solves, support


def certify_box(box: Mp3Box, mode: str, target: Optional[float] = None, hint=None, warm_t=()) -> tuple:
    """(certified upper bound on the box LP, LP solves, dual, support t-values).

    ``warm_t`` lists bucket left endpoints that carried mass in a related box;
    they seed the restricted LP.
    """
    c, A, b = lp_data(box, mode)
    t = t_grid(box)
    step = (t[-1] - t[0]) / box.l_t
    warm = sorted({int(round((v - 1.0) / step)) for v in warm_t}) if step > 0 else []
    lp = _as_lp(c, A, b)
    # the certificate adds CERT_TOL * (1 + sum |b|); aim below target by that much
    inner = None if target is None else target - CERT_TOL * (1.0 + np.abs(b).sum())
    y, _, solves, support = dual_bound(c, A, b, inner, hint=hint, warm_cols=warm)
    bound = certified_upper_bound(lp, CERT_TOL, dual=y)
    if target is not None and bound > target and hint is not None:
        # a parent dual can stall just above the target; retry from scratch
        y, _, more, support = dual_bound(c, A, b, inner, warm_cols=warm)
        solves += more
        bound = certified_upper_bound(lp, CERT_TOL, dual=y)
    return bound, solves, y, [float(t[j]) for j in support]


def _lo(x):
    return x[0] if isinstance(x, (tuple, list)) else x


def _hi(x):
    return x[1] if isinstance(x, (tuple, list)) else x


def analytic_prune(mode: str, mu, k=None) -> Optional[float]:
    """Smallest closed-form bound that applies to (mu, k); None if none applies.

    ``mu`` and ``k`` are numbers or (lo, hi) intervals.  The k-bound uses the
    slope of ln between t = 1 and t = k, ln(k)/(k - 1), which decreases in k,
    so the interval's lower end gives the supremum.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    coef = E_RATIO**2 if mode == "mp3" else E_RATIO
    small, large, slack = ((SMALL_MU_MP3, LARGE_MU_MP3, LARGE_MU_SLACK_MP3) if mode == "mp3"
                           else (SMALL_MU_MP5, LARGE_MU_MP5, LARGE_MU_SLACK_MP5))
    found = []
    if _hi(mu) <= 1:
        found.append(small)
    if _lo(mu) >= large:
        found.append(small + slack)
    if k is not None:
        kl = _lo(k)
        if _hi(k) <= 1:
            found.append(0.0)
        elif kl > 1:
            found.append(coef * _hi(mu) * math.log(kl) / (kl - 1.0))
    return min(found) if found else None


@dataclass(frozen=True)
class TailBound:
    y: float
    combined: float

    @property
    def exp_combined(self) -> float:
        return math.exp(self.combined)


def tail_bound_eval(mu: float, delta: float, mode: str = "mp3") -> TailBound:
    """y(mu) = ln(1 + C mu) / e^{delta^2 mu / 2};  combined = ln(1 + C) + 2 delta + y."""
    if not mu > 0 or not (0 < delta < 0.5):
        raise ValueError("need mu > 0 and delta in (0, 1/2)")
    c = E_RATIO**2 if mode in ("mp3", "mp4") else E_RATIO
    y = math.log1p(c * mu) * math.exp(-delta * delta * mu / 2.0)
    return TailBound(y, math.log1p(c) + 2.0 * delta + y)


@dataclass
class VerifyReport:
    mode: str
    target: float
    boxes_certified: int = 0
    boxes_pruned: int = 0
    max_certified_bound: float = -math.inf
    depth: int = 0
    lp_solves: int = 0
    boxes_solved: int = 0
    failures: list = field(default_factory=list)
    region: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d["certified"] = self.certified
        d["log_target"] = math.log(self.target)
        d["spec_version"] = SPEC_VERSION
        return d


def verify_region(mode: str, box: Mp3Box, target: float, max_depth: int = 45, l_t_cap: int = 1024,
                  progress: Optional[Callable] = None) -> VerifyReport:
    """Depth-first subdivision until every leaf box is certified.

    ``target`` is in exp space (e.g. 3.56).  A box is certified when an
    analytic bound or the LP dual bound is at most ln(target) - 1e-12.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    log_target = math.log(target) - TARGET_MARGIN
    rep = VerifyReport(mode, float(target), region=box.to_dict())
    stack = [(box, 0, None, ())]
    while stack:
        b, depth, hint, warm = stack.pop()
        rep.depth = max(rep.depth, depth)
        pruned = analytic_prune(mode, (b.mu_lo, b.mu_hi), (b.k_lo, b.k_hi))
        if pruned is not None and pruned <= log_target:
            rep.boxes_pruned += 1
            rep.boxes_certified += 1
            rep.max_certified_bound = max(rep.max_certified_bound, pruned)
            continue
        try:
            bound, solves, y, support = certify_box(b, mode, log_target, hint, warm)
        except CertificationError:
            bound, solves, y, support = math.inf, 1, None, ()
        rep.lp_solves += solves
        rep.boxes_solved += 1
        if progress is not None:
            progress(rep, b, bound)
        if bound <= log_target:
            rep.boxes_certified += 1
            rep.max_certified_bound = max(rep.max_certified_bound, bound)
            continue
        if depth >= max_depth:
            rep.failures.append({"box": b.to_dict(), "bound": bound})
            continue
        lo, hi = b.split(mode, l_t_cap)
        stack.append((hi, depth + 1, y, support))
        stack.append((lo, depth + 1, y, support))  # lower half first
    return rep


MP3_REGION_SMALL = Mp3Box(1.0, 3.0, 1.0, 20.0, 0.0, 1.0)
MP3_REGION_LARGE = Mp3Box(3.0, 3.6e5, 1.0, 2e7, 0.0, 1.0)
MP5_REGION = Mp3Box(1.0, 1000.0, 1.0, 30000.0)


def verify_mp3_full(target: float = 3.56, max_depth: int = 60, progress=None) -> list:
    """Both mp3 search regions (slow)."""
    return [verify_region("mp3", MP3_REGION_SMALL, target, max_depth, progress=progress),
            verify_region("mp3", MP3_REGION_LARGE, target, max_depth, progress=progress)]


@dataclass
class FeasiblePointReport:
    k: float
    objective: float
    mean: float
    mu_bar: float
    alpha: float
    worst_concentration_slack: float
    worst_lambda: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["exp_objective"] = math.exp(self.objective)
        d["spec_version"] = SPEC_VERSION
        return d


def check_feasible_point(p: float = 0.936, t_low: float = 1.0673, t_high: float = 50.0,
                         mu_md: float = 0.21, mu_sm: float = 1.0, lambdas=None) -> FeasiblePointReport:
    """Check a two-point distribution of t against the three-parameter program.

    ``mu_md`` is (1 - alpha) mu-bar and ``mu_sm`` is alpha mu-bar.  k is
    recovered from the equality row, and the concentration rows are checked
    in their small-eps1 limit (the strictest form) at every lambda given
    (default: the 60-point grid).
    """
    ts = np.array([t_low, t_high])
    ps = np.array([p, 1.0 - p])
    if np.any(ts < 1) or np.any(ps < 0) or abs(ps.sum() - 1) > 1e-12:
        raise ValueError("t must be >= 1 with probabilities summing to 1")
    mu_bar = mu_md + mu_sm
    alpha = mu_sm / mu_bar if mu_bar > 0 else 0.0
    mean = float(ps @ ts)
    if mean < mu_bar - 1e-12:
        raise ValueError(f"mean constraint violated: E[t] = {mean} < {mu_bar}")
    rhs_k = E_RATIO * mu_md + E_RATIO**2 * mu_sm
    k = _solve_k(ts, ps, rhs_k)
    lam = LAMBDAS if lambdas is None else np.asarray(lambdas, dtype=float)
    lhs = np.exp(lam[:, None] * ts[None, :]) @ ps
    rhs = np.exp(np.expm1(lam) * mu_md + lam * mu_sm)
    slack = rhs - lhs
    j = int(np.argmin(slack))
    if slack[j] < 0:
        raise ValueError(f"concentration row violated at lambda = {lam[j]}: {lhs[j]} > {rhs[j]}")
    obj = float(ps @ np.maximum(math.log(k) - np.log(ts), 0.0))
    return FeasiblePointReport(k, obj, mean, mu_bar, alpha, float(slack[j]), float(lam[j]))


def _solve_k(ts, ps, rhs: float) -> float:
    """Smallest k >= 1 with E[(k - t)^+] = rhs (piecewise linear, increasing)."""
    if rhs <= 0:
        return 1.0
    order = np.argsort(ts)
    ts, ps = ts[order], ps[order]
    acc_p, acc_pt = 0.0, 0.0
    for i in range(len(ts)):
        acc_p += ps[i]
        acc_pt += ps[i] * ts[i]
        nxt = ts[i + 1] if i + 1 < len(ts) else math.inf
        k = (rhs + acc_pt) / acc_p
        if k <= nxt:
            return max(k, 1.0)
    raise AssertionError("unreachable")
