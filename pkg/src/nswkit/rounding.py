"""Bipartite multigraph construction, cycle/path rounding and pipage rounding.

For each agent the (configuration, item) pairs of its fractional bundles are
ranked by greedy marginal gain phi, largest first.  The first unit of
y-mass becomes marked edges (the agent's "large" candidates); the remainder
becomes unmarked edges.  Rounding repeatedly finds a cycle of fractional
marked edges, or a path of fractional marked edges between two items closed
by one fractional unmarked edge at each end, and shifts x-values along it
with alternating signs until everything is integral.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ._backend import BACKEND, SplitMix64, derive_seeds, kernels
from ._kernels_py import CYCLE, NONE, PATH
from .conflp import FractionalSolution, check_solution
from .core import TABLE_MAX_ITEMS, Instance, Valuation, mask_items, value_table
from .submodular import greedy_order, multilinear_table, subset_min, _subset_masks

GRAPH_TOL = 1e-7
EPS1_DEFAULT = 1e-4


@dataclass(frozen=True)
class MultiEdge:
    agent: int
    item: int
    x: float
    marked: bool
    config: int  # index into BipartiteMultigraph.configs
    phi: float


@dataclass(frozen=True)
class ConfigCopy:
    """One configuration of one agent (possibly one of the two split copies)."""

    agent: int
    items: tuple
    y: float
    copy: str = ""  # "", "a" or "b"


@dataclass
class BipartiteMultigraph:
    n: int
    m: int
    agent: np.ndarray
    item: np.ndarray
    x: np.ndarray
    marked: np.ndarray
    config: np.ndarray
    phi: np.ndarray
    configs: tuple = ()
    valuations: tuple = ()

    @property
    def num_edges(self) -> int:
        return len(self.x)

    def edges(self) -> list:
        return [MultiEdge(int(self.agent[e]), int(self.item[e]), float(self.x[e]), bool(self.marked[e]),
                          int(self.config[e]), float(self.phi[e])) for e in range(self.num_edges)]

    def with_x(self, x) -> "BipartiteMultigraph":
        return replace(self, x=np.asarray(x, dtype=float).copy())

    def agent_edges(self, i: int) -> np.ndarray:
        return np.nonzero(self.agent == i)[0]

    def check(self, tol: float = GRAPH_TOL):
        if np.any(self.x < 0) or np.any(self.x > 1):
            raise ValueError("edge values must lie in [0, 1]")
        for i in range(self.n):
            es = self.agent_edges(i)
            mk = es[self.marked[es]]
            if abs(self.x[mk].sum() - 1.0) > tol:
                raise ValueError(f"agent {i}: marked mass {self.x[mk].sum()} != 1")
            um = es[~self.marked[es]]
            if len(um) and len(mk) and self.phi[mk].min() < self.phi[um].max() - 1e-9:
                raise ValueError(f"agent {i}: a marked edge has smaller phi than an unmarked one")
        tot = np.bincount(self.item, weights=self.x, minlength=self.m)
        if np.any(np.abs(tot - 1.0) > tol):
            j = int(np.argmax(np.abs(tot - 1.0)))
            raise ValueError(f"item {j}: edge mass {tot[j]} != 1")


def build_multigraph(instance: Instance, sol: FractionalSolution) -> BipartiteMultigraph:
    check_solution(instance, sol)
    n, m = instance.num_agents, instance.num_items
    rows = []  # (agent, item, x, marked, config, phi)
    configs: list = []
    for i, confs in enumerate(sol.by_agent(n)):
        val = instance.agents[i].valuation
        pairs = []
        orders = []
        for c, (s, y) in enumerate(confs):
            g = greedy_order(val, s)
            orders.append(g)
            for pos, (j, ph) in enumerate(zip(g.order, g.phi)):
                pairs.append((-ph, c, pos, j, ph))
        pairs.sort()
        z = np.array([confs[p[1]][1] for p in pairs])
        cum = np.cumsum(z)
        hit = np.nonzero(cum >= 1.0 - 1e-12)[0]
        tstar = int(hit[0]) if len(hit) else len(pairs) - 1
        before = float(cum[tstar - 1]) if tstar > 0 else 0.0
        a = 1.0 - before
        b = float(cum[tstar]) - 1.0
        if b <= 1e-12:
            b = 0.0
        cstar = pairs[tstar][1]
        base = len(configs)
        for c, (s, y) in enumerate(confs):
            if c == cstar and b > 0:
                configs.append(ConfigCopy(i, tuple(s), a, "a"))
            else:
                configs.append(ConfigCopy(i, tuple(s), y))
        b_id = None
        if b > 0:
            b_id = len(configs)
            configs.append(ConfigCopy(i, tuple(confs[cstar][0]), b, "b"))
        for t, (_, c, pos, j, ph) in enumerate(pairs):
            cid = base + c
            if t < tstar:
                if c != cstar:
                    rows.append((i, j, z[t], True, cid, ph))
                else:
                    rows.append((i, j, a, True, cid, ph))
                    if b > 0:
                        rows.append((i, j, b, True, b_id, ph))
            elif t > tstar:
                if c != cstar:
                    rows.append((i, j, z[t], False, cid, ph))
                else:
                    rows.append((i, j, a, False, cid, ph))
                    if b > 0:
                        rows.append((i, j, b, False, b_id, ph))
            else:
                rows.append((i, j, a, True, cid, ph))
                if b > 0:
                    rows.append((i, j, b, False, b_id, ph))
    g = BipartiteMultigraph(
        n, m,
        agent=np.array([r[0] for r in rows], dtype=np.int64),
        item=np.array([r[1] for r in rows], dtype=np.int64),
        x=np.array([r[2] for r in rows], dtype=float),
        marked=np.array([r[3] for r in rows], dtype=bool),
        config=np.array([r[4] for r in rows], dtype=np.int64),
        phi=np.array([r[5] for r in rows], dtype=float),
        configs=tuple(configs),
        valuations=tuple(a.valuation for a in instance.agents),
    )
    g.check()
    return g


@dataclass(frozen=True)
class MarkedCycle:
    edges: tuple
    signs: tuple


@dataclass(frozen=True)
class PseudoMarkedPath:
    edges: tuple
    signs: tuple


@dataclass(frozen=True)
class Done:
    pass


def _kernel_args(g: BipartiteMultigraph):
    return g.n, g.m, g.agent, g.item, g.marked.astype(np.uint8)


def find_rounding_structure(g: BipartiteMultigraph):
    n, m, agent, item, marked = _kernel_args(g)
    kind, edges, signs = kernels.find_structure(n, m, agent, item, np.asarray(g.x, dtype=float), marked)
    if kind == CYCLE:
        return MarkedCycle(tuple(edges), tuple(signs))
    if kind == PATH:
        return PseudoMarkedPath(tuple(edges), tuple(signs))
    return Done()


def rotate(g: BipartiteMultigraph, structure, rng: SplitMix64) -> BipartiteMultigraph:
    """One mean-preserving two-outcome shift along ``structure``."""
    if isinstance(structure, Done):
        return g
    x = np.asarray(g.x, dtype=float).copy()
    kernels.rotate(x, list(structure.edges), list(structure.signs), rng.next_double())
    return g.with_x(x)


@dataclass
class RoundingOutcome:
    seed: int
    assignment: list  # per agent: tuple of items
    large: list  # per agent: the large item
    x: np.ndarray

    def to_dict(self) -> dict:
        return {"seed": int(self.seed),
                "assignment": [{"agent": i, "items": list(s)} for i, s in enumerate(self.assignment)]}


def outcome_from_x(g: BipartiteMultigraph, x, seed: int) -> RoundingOutcome:
    x = np.asarray(x)
    on = x > 0.5
    assignment, large = [], []
    for i in range(g.n):
        es = g.agent_edges(i)
        assignment.append(tuple(sorted(set(int(j) for j in g.item[es[on[es]]]))))
        lg = es[on[es] & g.marked[es]]
        if len(lg) != 1:
            raise RuntimeError(f"agent {i} received {len(lg)} large items")
        large.append(int(g.item[lg[0]]))
    return RoundingOutcome(int(seed), assignment, large, x.astype(float))


def round(g: BipartiteMultigraph, seed: int) -> RoundingOutcome:  # noqa: A001 - mirrors the operation name
    n, m, agent, item, marked = _kernel_args(g)
    x = kernels.round_graph(n, m, agent, item, np.asarray(g.x, dtype=float), marked, int(seed))
    return outcome_from_x(g, x, seed)


def round_trials(g: BipartiteMultigraph, master_seed: int, trials: int, threads: int = 1) -> np.ndarray:
    """(trials, E) 0/1 matrix of final edge values.

    Trial t uses the sub-seed derived from (master_seed, "round", t), so the
    result does not depend on ``threads``.
    """
    seeds = derive_seeds(master_seed, "round", trials)
    n, m, agent, item, marked = _kernel_args(g)
    x0 = np.asarray(g.x, dtype=float)
    if threads <= 1 or trials < 2 * threads:
        return kernels.round_trials(n, m, agent, item, x0, marked, seeds)
    from concurrent.futures import ThreadPoolExecutor
    parts = np.array_split(seeds, threads)
    with ThreadPoolExecutor(threads) as ex:
        outs = list(ex.map(lambda s: kernels.round_trials(n, m, agent, item, x0, marked, s), parts))
    return np.vstack(outs)


def pipage_round(x, seed: int, schedule: Optional[Callable] = None) -> np.ndarray:
    """Modified pipage rounding of a fractional vector.

    The default schedule takes the first two fractional coordinates with
    saturating steps (or operation 1 on a lone fractional coordinate).  A
    custom ``schedule(x)`` returns ``(a, b, d1, d2)`` with ``b = None`` for
    operation 1.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("pipage input must lie in [0, 1]")
    if schedule is None:
        return kernels.pipage(x, int(seed))
    x = x.copy()
    rng = SplitMix64(int(seed))
    while True:
        frac = np.nonzero((x > 0) & (x < 1))[0]
        if len(frac) == 0:
            return x
        a, b, d1, d2 = schedule(x)
        u = rng.next_double()
        down = u < d2 / (d1 + d2)
        if b is None:
            if not (0 < d1 <= x[a] and 0 < d2 <= 1 - x[a]):
                raise ValueError("invalid operation-1 step")
            x[a] = x[a] - d1 if down else x[a] + d2
        else:
            if not (0 < d1 <= min(x[a], 1 - x[b]) + 1e-15 and 0 < d2 <= min(1 - x[a], x[b]) + 1e-15):
                raise ValueError("invalid operation-2 step")
            if down:
                x[a], x[b] = x[a] - d1, x[b] + d1
            else:
                x[a], x[b] = x[a] + d2, x[b] - d2
        x[np.abs(x) < 1e-12] = 0.0
        x[np.abs(x - 1) < 1e-12] = 1.0


def pipage_trials(x, master_seed: int, trials: int) -> np.ndarray:
    seeds = derive_seeds(master_seed, "pipage", trials)
    return kernels.pipage_trials(np.asarray(x, dtype=float), seeds)


# ---------------------------------------------------------------- per-agent analysis


@dataclass
class ItemClassification:
    agent: int
    edges: np.ndarray  # edge ids of the agent
    classes: tuple  # "large" | "medium" | "small" per edge
    norm: float  # min marked phi
    tau: float


@dataclass
class AgentStats:
    mu_sm: float
    mu_nlg: float
    mubar_md: float
    mubar_sm: float
    p_star: float

    def to_dict(self) -> dict:
        return {"mu_sm": self.mu_sm, "mu_nlg": self.mu_nlg, "mubar_md": self.mubar_md,
                "mubar_sm": self.mubar_sm, "p_star": self.p_star}


class CopyProxy:
    """Greedy proxy over the agent's edge copies, restricted to a subset of edges.

    Copies in the same configuration form one block; a set of copies is worth
    v(items they name).  Values are divided by ``norm``.
    """

    def __init__(self, g: BipartiteMultigraph, edges: Sequence[int], norm: float):
        self.edges = np.asarray(edges, dtype=np.int64)
        if len(self.edges) > TABLE_MAX_ITEMS:
            raise ValueError("too many copies for an exact proxy table")
        agent = int(g.agent[self.edges[0]]) if len(self.edges) else 0
        tab = value_table(g.valuations[agent]) if len(self.edges) else np.zeros(1)
        items = g.item[self.edges]
        item_masks = np.zeros(1, dtype=np.int64)
        for j in items:
            item_masks = np.concatenate([item_masks, item_masks | (1 << int(j))])
        _, phi_sum = _subset_masks(range(len(self.edges)), g.phi[self.edges])
        self.table = (phi_sum + subset_min(tab[item_masks] - phi_sum)) / norm

    def masks_from_rows(self, rows: np.ndarray) -> np.ndarray:
        """Index into ``table`` for each 0/1 trial row (over all graph edges)."""
        sub = rows[:, self.edges].astype(np.int64)
        return (sub << np.arange(len(self.edges), dtype=np.int64)).sum(axis=1)


def classify_and_stats(g: BipartiteMultigraph, agent: int, eps1: float = EPS1_DEFAULT, enum_size: int = 3):
    es = g.agent_edges(agent)
    mk = es[g.marked[es]]
    if len(mk) == 0:
        raise ValueError(f"agent {agent} has no marked edge")
    norm = float(g.phi[mk].min())
    if norm <= 0:
        raise ValueError(f"agent {agent}: large items must have positive marginal gain")
    tau = math.sqrt(eps1)
    classes = []
    for e in es:
        if g.marked[e]:
            classes.append("large")
        elif g.phi[e] / norm >= tau:
            classes.append("medium")
        else:
            classes.append("small")
    cls = ItemClassification(agent, es, tuple(classes), norm, tau)
    nlg = es[~g.marked[es]]
    small = set(int(e) for e, c in zip(es, classes) if c == "small")
    if len(nlg):
        proxy = CopyProxy(g, nlg, norm)
        x_nlg = g.x[nlg]
        x_sm = np.where([int(e) in small for e in nlg], x_nlg, 0.0)
        mu_nlg = multilinear_table(proxy.table, x_nlg)
        mu_sm = multilinear_table(proxy.table, x_sm)
    else:
        mu_nlg = mu_sm = 0.0
    klass = dict(zip((int(e) for e in es), classes))
    mubar_md = mubar_sm = p_star = 0.0
    for cid in sorted(set(int(c) for c in g.config[es])):
        ce = es[g.config[es] == cid]
        y = g.configs[cid].y
        ph = g.phi[ce] / norm
        kinds = [klass[int(e)] for e in ce]
        mubar_md += y * sum(p for p, k in zip(ph, kinds) if k == "medium")
        mubar_sm += y * sum(p for p, k in zip(ph, kinds) if k == "small")
        order = sorted(range(len(ce)), key=lambda t: (-ph[t], t))
        nenu = set(int(ce[t]) for t in order[enum_size:])
        sm = set(int(e) for e, k in zip(ce, kinds) if k == "small")
        if sm < nenu:
            p_star += y
    c = 1.0 - 1.0 / math.e
    return cls, AgentStats(mu_sm, mu_nlg, c * mubar_md, c * mubar_sm, p_star)


def agent_value_samples(g: BipartiteMultigraph, rows: np.ndarray, agent: int) -> np.ndarray:
    """v_i(T_i) for every trial row."""
    es = g.agent_edges(agent)
    tab = value_table(g.valuations[agent])
    on = rows[:, es].astype(bool)
    bits = (1 << g.item[es].astype(np.int64))
    masks = np.bitwise_or.reduce(np.where(on, bits[None, :], 0), axis=1)
    return tab[masks]


def random_fractional_solution(instance: Instance, rng: np.random.Generator, parts: int = 3,
                               min_weight: float = 0.1) -> FractionalSolution:
    """Convex combination of random allocations that give every agent a positive bundle."""
    n, m = instance.num_agents, instance.num_items
    if n > m:
        raise ValueError("need at least as many items as agents")
    lam = rng.dirichlet(np.ones(parts))
    lam = min_weight + (1 - parts * min_weight) * lam
    entries: dict = {}
    for lw in lam:
        for _ in range(1000):
            perm = rng.permutation(m)
            owner = np.empty(m, dtype=np.int64)
            owner[perm[:n]] = np.arange(n)
            owner[perm[n:]] = rng.integers(0, n, m - n)
            bundles = [tuple(sorted(np.nonzero(owner == i)[0].tolist())) for i in range(n)]
            if all(instance.agents[i].valuation.value(bundles[i]) > 0 for i in range(n)):
                break
        else:
            raise ValueError("could not sample an allocation with positive values")
        for i, s in enumerate(bundles):
            entries[(i, s)] = entries.get((i, s), 0.0) + float(lw)
    sol = FractionalSolution([(i, s, y) for (i, s), y in sorted(entries.items())], 0.0)
    from .conflp import plain_objective
    sol.lp_value = plain_objective(instance, sol)
    return sol
