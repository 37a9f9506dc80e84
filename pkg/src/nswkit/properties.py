"""Randomized property suites shared by the CLI ``check`` command and the tests.

Each suite returns a ``CheckResult`` whose ``passed`` flag compares an
empirical quantity against its bound at a stated tolerance, plus the worst
margin seen so failures are easy to inspect.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import conflp, rounding
from .core import Instance, random_coverage, random_instance, value_table
from .submodular import concave_extension, greedy_order, make_proxy, multilinear_table, proxy_table

LAMBDAS = (-0.25, -1.0, -2.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int
    worst: float  # smallest (bound - observed) margin; negative means violated
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "cases": self.cases, "worst_margin": self.worst,
                "detail": self.detail}


def _random_blocks(m: int, rng: np.random.Generator) -> list:
    labels = rng.integers(0, max(1, int(rng.integers(1, m + 1))), size=m)
    return [np.nonzero(labels == b)[0].tolist() for b in np.unique(labels)]


def _masks_of(rows: np.ndarray) -> np.ndarray:
    return (rows.astype(np.int64) << np.arange(rows.shape[1], dtype=np.int64)).sum(axis=1)


# ---------------------------------------------------------------- proxy function


def proxy_properties(rng: np.random.Generator, count: int = 200, max_items: int = 10, tol: float = 1e-9) -> CheckResult:
    """Monotone, submodular, below v, greedy singletons, additive on blocks; exhaustively."""
    worst = math.inf
    bad = []
    for case in range(count):
        m = int(rng.integers(2, max_items + 1))
        val = random_coverage(m, int(rng.integers(3, 9)), rng)
        blocks = _random_blocks(m, rng)
        prox = make_proxy(val, blocks)
        tab = proxy_table(prox)
        base = value_table(val)
        masks = np.arange(1 << m)
        margins = []
        for j in range(m):
            bit = 1 << j
            without = masks[(masks & bit) == 0]
            gain = tab[without | bit] - tab[without]
            margins.append(gain.min())  # (a) monotone
            for jj in range(j + 1, m):
                b2 = 1 << jj
                w = without[(without & b2) == 0]
                # (a) submodular: gain of j shrinks once jj is present
                margins.append(((tab[w | bit] - tab[w]) - (tab[w | bit | b2] - tab[w | b2])).min())
        margins.append((base - tab).min())  # (b) below v
        for blk in blocks:
            g = greedy_order(val, blk)
            prefix = 0
            for j, ph in zip(g.order, g.phi):
                # (c) greedy marginal values
                step = base[prefix | (1 << j)] - base[prefix]
                margins.append(-abs(tab[1 << j] - step))
                prefix |= 1 << j
            bm = sum(1 << j for j in blk)
            sub = masks[(masks & ~bm) == 0]
            phi_sum = np.array([sum(prox.phi[j] for j in range(m) if s >> j & 1) for s in sub])
            margins.append(-np.abs(tab[sub] - phi_sum).max())  # (d) additive on a block
        w = float(min(margins))
        worst = min(worst, w)
        if w < -tol:
            bad.append(case)
    return CheckResult("proxy_properties", not bad, count, worst, {"failed_cases": bad[:10]})


# ---------------------------------------------------------------- extensions


def extension_sandwich(rng: np.random.Generator, count: int = 100, max_items: int = 12, tol: float = 1e-7) -> CheckResult:
    """(1 - 1/e) f+(x) <= F(x) <= f+(x) on random coverage valuations."""
    worst = math.inf
    bad = []
    for case in range(count):
        m = int(rng.integers(2, max_items + 1))
        val = random_coverage(m, int(rng.integers(3, 10)), rng)
        x = rng.random(m)
        x[rng.random(m) < 0.15] = 0.0
        big, _ = concave_extension(val, x)
        F = multilinear_table(value_table(val), x)
        w = min(F - (1 - 1 / math.e) * big, big - F)
        worst = min(worst, w)
        if w < -tol:
            bad.append(case)
    return CheckResult("extension_sandwich", not bad, count, worst, {"failed_cases": bad[:10]})


# ---------------------------------------------------------------- pipage


def _mgf_stats(values: np.ndarray, lam: float):
    z = np.exp(lam * values)
    return float(z.mean()), float(z.std(ddof=1) / math.sqrt(len(z)))


def pipage_bound(lam: float, mu: float, mu_small: float, tau: float) -> float:
    return math.exp((math.exp(lam * tau) - 1) * mu_small / tau + (math.exp(lam) - 1) * (mu - mu_small))


def pipage_suite(rng: np.random.Generator, count: int = 20, trials: int = 100_000, max_items: int = 10,
                 tau: float = 0.3, seed: int = 0, lambdas=LAMBDAS) -> CheckResult:
    """E[f(U)] >= F(x) and the MGF left tail, on scaled proxy valuations."""
    worst = math.inf
    bad = []
    for case in range(count):
        m = int(rng.integers(3, max_items + 1))
        val = random_coverage(m, int(rng.integers(4, 10)), rng)
        tab = proxy_table(make_proxy(val, _random_blocks(m, rng)))
        single = tab[1 << np.arange(m)]
        tab = tab / max(float(single.max()), 1e-300)
        single = tab[1 << np.arange(m)]
        x = rng.random(m)
        small = single <= tau
        mu = multilinear_table(tab, x)
        mu_small = multilinear_table(tab, np.where(small, x, 0.0))
        rows = rounding.pipage_trials(x, seed + case, trials)
        vals = tab[_masks_of(rows)]
        se = float(vals.std(ddof=1) / math.sqrt(trials))
        margins = [vals.mean() - mu + 4 * se]
        for lam in lambdas:
            mean, se_z = _mgf_stats(vals, lam)
            margins.append(pipage_bound(lam, mu, mu_small, tau) + 4 * se_z - mean)
        w = float(min(margins))
        worst = min(worst, w)
        if w < 0:
            bad.append(case)
    return CheckResult("pipage", not bad, count, worst, {"failed_cases": bad[:10], "trials": trials, "tau": tau})


def negative_correlation_suite(rng: np.random.Generator, count: int = 20, trials: int = 100_000, max_items: int = 10,
                               lambdas=(-2.0, -1.0, -0.25, 0.5, 1.0), seed: int = 0) -> CheckResult:
    """E[exp(lam sum Y_i)] <= prod E[exp(lam Y_i)] for greedy-chain marginals Y_i.

    X is a product distribution and Y_i = v(X_1..X_i) - v(X_1..X_{i-1}).
    """
    worst = math.inf
    bad = []
    for case in range(count):
        m = int(rng.integers(2, max_items + 1))
        tab = value_table(random_coverage(m, int(rng.integers(3, 9)), rng))
        tab = tab / max(float(tab.max()), 1e-300)
        x = rng.random(m)
        draw = np.random.default_rng([seed, case]).random((trials, m)) < x
        prefix = np.zeros(trials, dtype=np.int64)
        ys = np.empty((trials, m))
        for i in range(m):
            nxt = prefix | (draw[:, i].astype(np.int64) << i)
            ys[:, i] = tab[nxt] - tab[prefix]
            prefix = nxt
        total = ys.sum(axis=1)
        margins = []
        for lam in lambdas:
            lhs, se_l = _mgf_stats(total, lam)
            parts = [_mgf_stats(ys[:, i], lam) for i in range(m)]
            rhs = float(np.prod([p[0] for p in parts]))
            se_r = rhs * math.sqrt(sum((p[1] / p[0]) ** 2 for p in parts))
            margins.append(rhs - lhs + 4 * math.hypot(se_l, se_r))
        w = float(min(margins))
        worst = min(worst, w)
        if w < 0:
            bad.append(case)
    return CheckResult("negative_correlation", not bad, count, worst, {"failed_cases": bad[:10]})


# ---------------------------------------------------------------- multigraph rounding


@dataclass
class RoundingCheck:
    one_large: bool
    marginal_margin: float
    mgf_margin: float
    conc_margin: float
    stats: list


def rounding_instance_check(instance: Instance, sol: conflp.FractionalSolution, seed: int, trials: int = 100_000,
                            eps1: float = rounding.EPS1_DEFAULT, lambdas=LAMBDAS) -> RoundingCheck:
    """Exactly-one-large, marginals within 4 sigma, and both MGF forms per agent."""
    g = rounding.build_multigraph(instance, sol)
    rows = rounding.round_trials(g, seed, trials)
    one_large = True
    for i in range(g.n):
        mk = np.nonzero((g.agent == i) & g.marked)[0]
        one_large &= bool(np.all(rows[:, mk].sum(axis=1) == 1))
    freq = rows.mean(axis=0)
    sig = np.sqrt(g.x * (1 - g.x) / trials)
    marg = float((4 * sig - np.abs(freq - g.x)).min())
    tau = math.sqrt(eps1)
    mgf, conc = math.inf, math.inf
    stats = []
    for i in range(g.n):
        cls, st = rounding.classify_and_stats(g, i, eps1)
        stats.append(st.to_dict())
        nlg = np.nonzero((g.agent == i) & ~g.marked)[0]
        if len(nlg) == 0:
            continue
        proxy = rounding.CopyProxy(g, nlg, cls.norm)
        t_nlg = proxy.table[proxy.masks_from_rows(rows)]
        for lam in lambdas:
            mean, se = _mgf_stats(t_nlg, lam)
            b_mgf = pipage_bound(lam, st.mu_nlg, st.mu_sm, tau)
            b_conc = math.exp(math.expm1(lam) * st.mubar_md + math.expm1(lam * tau) * st.mubar_sm / tau)
            mgf = min(mgf, b_mgf + 4 * se - mean)
            conc = min(conc, b_conc + 4 * se - mean)
    return RoundingCheck(one_large, marg, mgf, conc, stats)


def summarize_trials(instance: Instance, sol: conflp.FractionalSolution, g, rows: np.ndarray,
                     enum_size: int = 3) -> dict:
    """Per-agent E[ln v_i(T_i)] and the exp-space ratio against the adjusted LP value."""
    trials = rows.shape[0]
    w = instance.weights
    per_trial = np.zeros(trials)
    agents = []
    for i in range(instance.num_agents):
        vals = rounding.agent_value_samples(g, rows, i)
        with np.errstate(divide="ignore"):
            lv = np.log(vals)
        finite = bool(np.all(vals > 0))
        mean = (float(lv[0]) if np.ptp(lv) == 0 else float(lv.mean())) if finite else -math.inf
        se = float(lv.std(ddof=1) / math.sqrt(trials)) if finite and trials > 1 else 0.0
        agents.append({"agent": i, "mean_log_value": mean, "stderr": se})
        per_trial += w[i] * lv
    adj = conflp.adjusted_lp_objective(instance, sol, enum_size)
    if np.all(np.isfinite(per_trial)):
        # a constant sample keeps its exact value (pairwise summation can drift by an ulp)
        alg = float(per_trial[0]) if np.ptp(per_trial) == 0 else float(per_trial.mean())
        se = float(per_trial.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        ratio = math.exp(adj - alg)
        ratio_se = ratio * se
    else:
        alg, ratio, ratio_se = -math.inf, math.inf, math.inf
    return {"agents": agents, "log_alg": alg, "adjusted_lp_value": adj, "ratio": ratio, "ratio_stderr": ratio_se}


def end_to_end(instance: Instance, sol: conflp.FractionalSolution, seed: int, trials: int,
               enum_size: int = 3) -> dict:
    g = rounding.build_multigraph(instance, sol)
    return summarize_trials(instance, sol, g, rounding.round_trials(g, seed, trials), enum_size)


def random_rounding_case(rng: np.random.Generator, max_agents: int = 4, max_items: int = 10):
    """Random instance plus a fractional solution that is genuinely fractional."""
    n = int(rng.integers(2, max_agents + 1))
    m = int(rng.integers(max(n, 4), max_items + 1))
    inst = random_instance(n, m, rng)
    sol = rounding.random_fractional_solution(inst, rng, parts=int(rng.integers(2, 5)))
    return inst, sol


def brute_force_sanity(instance: Instance, sol: conflp.FractionalSolution) -> float:
    """exp(LP) / exp(best integral log-NSW); at least 1 for an optimal LP value."""
    from .core import brute_force_opt
    _, best = brute_force_opt(instance)
    return math.exp(sol.lp_value - best)

