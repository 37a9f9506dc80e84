"""Configuration LP: exact enumeration solver, column generation, pricing oracle.

The LP has one variable y[i, S] per agent i and nonempty bundle S with
v_i(S) > 0, maximizes sum w_i y[i, S] ln v_i(S), and asks every item to be
covered exactly once and every agent to receive exactly one bundle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import NEG_INF, TABLE_MAX_ITEMS, Instance, Valuation, _check_items, mask_items, to_mask, value_table
from .lp import LinearProgram, Row, solve_lp
from .submodular import greedy_order

EXACT_MAX_ITEMS = 16
FEAS_TOL = 1e-7
E_RATIO = math.e / (math.e - 1.0)
_ARTIFICIAL_COST = 1e6


@dataclass
class FractionalSolution:
    entries: list  # (agent, config tuple, y)
    lp_value: float
    rounds: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        return {"lp_value": self.lp_value,
                "entries": [{"agent": int(i), "config": list(s), "y": float(y)} for i, s, y in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "FractionalSolution":
        entries = [(int(e["agent"]), tuple(sorted(int(j) for j in e["config"])), float(e["y"])) for e in d["entries"]]
        return cls(entries, float(d["lp_value"]))

    def by_agent(self, n: int) -> list:
        out = [[] for _ in range(n)]
        for i, s, y in self.entries:
            out[i].append((s, y))
        return out


def feasibility_residuals(instance: Instance, sol: FractionalSolution) -> tuple[float, float]:
    """Max |agent mass - 1| and max |item coverage - 1|."""
    agent = np.zeros(instance.num_agents)
    item = np.zeros(instance.num_items)
    for i, s, y in sol.entries:
        agent[i] += y
        for j in s:
            item[j] += y
    ra = float(np.abs(agent - 1).max()) if len(agent) else 0.0
    ri = float(np.abs(item - 1).max()) if len(item) else 0.0
    return ra, ri


def check_solution(instance: Instance, sol: FractionalSolution, tol: float = FEAS_TOL):
    for i, s, y in sol.entries:
        if not (0 <= i < instance.num_agents):
            raise ValueError(f"agent index {i} out of range")
        if y <= 0:
            raise ValueError("entries must have y > 0")
        if not s:
            raise ValueError("configurations must be nonempty")
        _check_items(s, instance.num_items)
    ra, ri = feasibility_residuals(instance, sol)
    if ra > tol or ri > tol:
        raise ValueError(f"fractional solution infeasible: agent residual {ra:.2e}, item residual {ri:.2e}")


def plain_objective(instance: Instance, sol: FractionalSolution) -> float:
    total = 0.0
    for i, s, y in sol.entries:
        a = instance.agents[i]
        lv = a.valuation.log_value(s)
        if lv == NEG_INF:
            return NEG_INF
        total += a.weight * y * lv
    return total


def solve_conflp_exact(instance: Instance) -> FractionalSolution:
    """Solve the configuration LP over all 2^m bundles per agent."""
    n, m = instance.num_agents, instance.num_items
    if m > EXACT_MAX_ITEMS:
        raise ValueError(f"exact configuration LP needs num_items <= {EXACT_MAX_ITEMS}")
    masks = np.arange(1, 1 << m)
    inc = ((masks[None, :] >> np.arange(m)[:, None]) & 1).astype(float)
    cols_c, cols_agent, cols_mask = [], [], []
    for i, a in enumerate(instance.agents):
        tab = value_table(a.valuation)[masks]
        keep = tab > 0
        if not keep.any():
            raise ValueError(f"agent {i} values every bundle at 0")
        cols_c.append(a.weight * np.log(tab[keep]))
        cols_agent.append(np.full(int(keep.sum()), i))
        cols_mask.append(masks[keep])
    c = np.concatenate(cols_c)
    agent_of = np.concatenate(cols_agent)
    mask_of = np.concatenate(cols_mask)
    A_items = inc[:, mask_of - 1]
    A_agents = (agent_of[None, :] == np.arange(n)[:, None]).astype(float)
    rows = [Row(A_items[j], "=", 1.0) for j in range(m)] + [Row(A_agents[i], "=", 1.0) for i in range(n)]
    sol = solve_lp(LinearProgram(c, rows))
    if sol.status != "optimal":
        raise ValueError(f"configuration LP not solved: {sol.status} {sol.message}")
    entries = [(int(agent_of[k]), mask_items(int(mask_of[k])), float(sol.primal[k]))
               for k in np.nonzero(sol.primal > 1e-12)[0]]
    out = FractionalSolution(entries, 0.0)
    out.lp_value = plain_objective(instance, out)
    check_solution(instance, out)
    return out


@dataclass(frozen=True)
class ConfigSplit:
    enumerated: tuple
    rest: tuple
    enum_size: int


def config_split(valuation: Valuation, s, enum_size: int) -> ConfigSplit:
    g = greedy_order(valuation, s)
    k = min(len(g.order), enum_size)
    return ConfigSplit(tuple(sorted(g.order[:k])), tuple(sorted(g.order[k:])), enum_size)


def adjusted_value(valuation: Valuation, s, enum_size: int) -> float:
    sp = config_split(valuation, s, enum_size)
    v_enu = valuation.value(sp.enumerated)
    return v_enu + E_RATIO * (valuation.value(s) - v_enu)


def adjusted_lp_objective(instance: Instance, sol: FractionalSolution, enum_size: int = 3) -> float:
    total = 0.0
    for i, s, y in sol.entries:
        a = instance.agents[i]
        val = adjusted_value(a.valuation, s, enum_size)
        if val <= 0:
            return NEG_INF
        total += a.weight * y * math.log(val)
    return total


def agent_adjusted_contribution(instance: Instance, sol: FractionalSolution, agent: int, enum_size: int = 3) -> float:
    """Unweighted sum over agent's configurations of y * ln(adjusted value)."""
    v = instance.agents[agent].valuation
    total = 0.0
    for i, s, y in sol.entries:
        if i == agent:
            total += y * math.log(adjusted_value(v, s, enum_size))
    return total


def _greedy_complete_table(tab, costs, budget, seeds, m):
    """Vectorized greedy completion of many seed masks at once."""
    bits = (1 << np.arange(m, dtype=np.int64))
    S = np.array(seeds, dtype=np.int64)
    spent = np.array([costs[list(mask_items(int(s)))].sum() if s else 0.0 for s in S])
    active = np.ones(len(S), dtype=bool)
    for _ in range(m):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        cur = S[idx]
        cand = cur[:, None] | bits[None, :]
        gain = tab[cand] - tab[cur][:, None]
        free = ((cur[:, None] & bits[None, :]) == 0) & (spent[idx][:, None] + costs[None, :] <= budget + 1e-12)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(costs[None, :] > 0, gain / np.where(costs > 0, costs, 1.0)[None, :], np.inf)
        ratio = np.where(free, ratio, -np.inf)
        best = np.argmax(ratio, axis=1)
        ok = ratio[np.arange(len(idx)), best] > -np.inf
        active[idx[~ok]] = False
        go = idx[ok]
        S[go] |= bits[best[ok]]
        spent[go] += costs[best[ok]]
    return S


def modified_greedy_knapsack(valuation: Valuation, costs, budget: float, enum_size: int = 3) -> tuple:
    """Seed enumeration plus greedy marginal-gain-per-cost completion.

    Every seed of size <= enum_size that fits the budget is extended greedily
    by the affordable item of best gain/cost ratio (ties to the smaller index)
    until nothing fits.  The best completed set is returned (first seed in
    enumeration order wins ties).
    """
    if enum_size < 1:
        raise ValueError("enum_size must be >= 1")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    m = valuation.num_items
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (m,) or np.any(costs < 0):
        raise ValueError("costs must be nonnegative, one per item")
    seeds = []
    for r in range(enum_size + 1):
        for c in itertools.combinations(range(m), r):
            if costs[list(c)].sum() <= budget + 1e-12:
                seeds.append(to_mask(c))
    if m <= TABLE_MAX_ITEMS:
        tab = value_table(valuation)
        done = _greedy_complete_table(tab, costs, budget, seeds, m)
        vals = tab[done]
        return mask_items(int(done[int(np.argmax(vals))]))
    best_set, best_val = (), -1.0
    for seed in seeds:
        s = set(mask_items(seed))
        spent = float(costs[list(s)].sum())
        cur = valuation.value(s)
        while True:
            pick, pick_ratio = None, -np.inf
            for j in range(m):
                if j in s or spent + costs[j] > budget + 1e-12:
                    continue
                gain = valuation.value(s | {j}) - cur
                ratio = np.inf if costs[j] == 0 else gain / costs[j]
                if ratio > pick_ratio:
                    pick, pick_ratio = j, ratio
            if pick is None:
                break
            s.add(pick)
            spent += costs[pick]
            cur = valuation.value(s)
        if cur > best_val:
            best_set, best_val = tuple(sorted(s)), cur
    return best_set


def _trim(valuation: Valuation, s: tuple, alpha: np.ndarray) -> tuple:
    """Drop costly items that add nothing to the bundle's value."""
    s = list(s)
    full = valuation.value(s)
    for j in sorted(s, key=lambda j: -alpha[j]):
        if alpha[j] <= 0 or len(s) == 1:
            continue
        rest = [x for x in s if x != j]
        if valuation.value(rest) >= full - 1e-12:
            s = rest
    return tuple(sorted(s))


def value_levels(valuation: Valuation, enum_size: int) -> np.ndarray:
    m = valuation.num_items
    singles = [valuation.value((j,)) for j in range(m)]
    lo = min((v for v in singles if v > 0), default=0.0)
    hi = valuation.value(range(m))
    if lo <= 0 or hi <= 0:
        return np.array([])
    ratio = 1.0 + 1.0 / enum_size
    count = int(math.floor(math.log(hi / lo) / math.log(ratio))) + 1
    return np.append(lo * ratio ** np.arange(count), hi)


def price_agent(instance: Instance, i: int, alpha: np.ndarray, beta: float, enum_size: int,
                tol: float = 1e-9) -> list:
    """Bundles S with w_i ln v_i(S) - alpha(S) - beta > tol, found by the knapsack oracle."""
    a = instance.agents[i]
    found = {}
    for level in value_levels(a.valuation, enum_size):
        budget = a.weight * math.log(level) - beta
        if budget < 0:
            continue
        s = modified_greedy_knapsack(a.valuation, alpha, budget, enum_size)
        if not s:
            continue
        s = _trim(a.valuation, s, alpha)
        v = a.valuation.value(s)
        if v <= 0:
            continue
        rc = a.weight * math.log(v) - float(alpha[list(s)].sum()) - beta
        if rc > tol:
            found[s] = rc
    return sorted(found, key=lambda s: (-found[s], s))


def _fill_items(instance: Instance, entries: list) -> list:
    """Turn an item-packing solution into an exact cover.

    Items with coverage deficit d are added to configurations that miss them
    (in agent, then entry order), splitting entries so that exactly d mass
    gains the item.  Agent masses are unchanged and, by monotonicity, values
    do not drop.
    """
    entries = [list(e) for e in entries]
    m = instance.num_items
    for j in range(m):
        cover = sum(y for _, s, y in entries if j in s)
        deficit = 1.0 - cover
        if deficit <= 1e-12:
            continue
        new = []
        for e in sorted(entries, key=lambda e: (e[0], e[1])):
            i, s, y = e
            if deficit > 1e-15 and j not in s:
                take = min(y, deficit)
                deficit -= take
                if y - take > 1e-15:
                    new.append([i, s, y - take])
                new.append([i, tuple(sorted(s + (j,))), take])
            else:
                new.append(e)
        entries = new
    merged: dict = {}
    for i, s, y in entries:
        merged[(i, s)] = merged.get((i, s), 0.0) + y
    return [(i, s, y) for (i, s), y in sorted(merged.items()) if y > 1e-15]


def column_generation_solve(instance: Instance, enum_size: int = 3, max_rounds: int = 200,
                            exact_pricing: bool = False) -> FractionalSolution:
    """Restricted master LP over a growing column pool.

    Item rows are packing rows (<= 1) so that item duals are nonnegative
    costs for the knapsack oracle; the result is converted to an exact cover
    afterwards.  Each agent also has an artificial empty column with a large
    penalty, which keeps the master feasible; it must be unused at the end.
    ``exact_pricing`` prices by full enumeration (small m only) instead of
    the knapsack oracle.
    """
    n, m = instance.num_agents, instance.num_items
    pool: list = []
    seen = set()

    def add(i, s):
        if (i, s) not in seen and instance.agents[i].valuation.value(s) > 0:
            seen.add((i, s))
            pool.append((i, s))

    for i in range(n):
        for j in range(m):
            add(i, (j,))
        add(i, tuple(range(m)))
    tables = None
    if exact_pricing:
        if m > TABLE_MAX_ITEMS:
            raise ValueError("exact pricing needs a small universe")
        tables = [value_table(a.valuation) for a in instance.agents]
        all_masks = np.arange(1 << m)
        inc = ((all_masks[:, None] >> np.arange(m)[None, :]) & 1).astype(float)
    rounds, converged = 0, False
    sol = None
    while rounds < max_rounds:
        rounds += 1
        k = len(pool)
        c = np.concatenate([[instance.agents[i].weight * instance.agents[i].valuation.log_value(s) for i, s in pool],
                            np.full(n, -_ARTIFICIAL_COST)])
        A = np.zeros((m + n, k + n))
        for col, (i, s) in enumerate(pool):
            A[list(s), col] = 1.0
            A[m + i, col] = 1.0
        A[m + np.arange(n), k + np.arange(n)] = 1.0
        lp = LinearProgram.from_matrix(c, A, ["<="] * m + ["="] * n, np.ones(m + n))
        sol = solve_lp(lp)
        if sol.status != "optimal":
            raise ValueError(f"master LP failed: {sol.status} {sol.message}")
        alpha = np.maximum(sol.dual[:m], 0.0)
        beta = sol.dual[m:]
        added = 0
        for i in range(n):
            if exact_pricing:
                with np.errstate(divide="ignore"):
                    score = instance.agents[i].weight * np.log(tables[i]) - inc @ alpha - beta[i]
                score[0] = -np.inf
                order = np.argsort(-score, kind="stable")[:5]
                cands = [mask_items(int(s)) for s in order if score[s] > 1e-9]
            else:
                cands = price_agent(instance, i, alpha, beta[i], enum_size)
            for s in cands[:5]:
                if (i, s) not in seen:
                    add(i, s)
                    added += 1
        if added == 0:
            converged = True
            break
    x = sol.primal
    if np.any(x[len(pool):] > 1e-9):
        raise ValueError("configuration LP infeasible: some agent cannot receive a positive-value bundle")
    entries = [(pool[col][0], pool[col][1], float(x[col])) for col in range(len(pool)) if x[col] > 1e-12]
    entries = _normalize_agents(entries, n)
    entries = _fill_items(instance, entries)
    out = FractionalSolution(entries, 0.0, rounds, converged)
    out.lp_value = plain_objective(instance, out)
    check_solution(instance, out)
    return out


def _normalize_agents(entries, n):
    tot = np.zeros(n)
    for i, _, y in entries:
        tot[i] += y
    return [(i, s, y / tot[i]) for i, s, y in entries]
