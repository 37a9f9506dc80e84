"""Greedy orders, multilinear/concave extensions and the greedy proxy function."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import TABLE_MAX_ITEMS, Valuation, _check_items, mask_items, to_mask, value_table
from . import lp as _lp

PROXY_MAX_SET = 22
EXACT_MULTILINEAR_MAX = 20
CONCAVE_MAX_ITEMS = 16


@dataclass(frozen=True)
class GreedyOrder:
    order: tuple
    phi: tuple

    def phi_of(self) -> dict:
        return dict(zip(self.order, self.phi))


def _value_fn(val: Valuation):
    if val.num_items <= TABLE_MAX_ITEMS:
        tab = value_table(val)
        return lambda mask: float(tab[mask])
    return lambda mask: val.value(mask_items(mask))


def greedy_order(valuation: Valuation, s: Iterable[int]) -> GreedyOrder:
    """Repeatedly pick the item of largest marginal gain; ties to the smallest index."""
    remaining = list(_check_items(s, valuation.num_items))
    f = _value_fn(valuation)
    cur_mask, cur_val = 0, f(0)
    order, phi = [], []
    while remaining:
        best_j, best_gain = None, None
        for j in remaining:  # ascending, so strict '>' keeps the smallest index on ties
            gain = f(cur_mask | (1 << j)) - cur_val
            if best_gain is None or gain > best_gain:
                best_j, best_gain = j, gain
        remaining.remove(best_j)
        order.append(best_j)
        phi.append(max(best_gain, 0.0))
        cur_mask |= 1 << best_j
        cur_val += best_gain
    return GreedyOrder(tuple(order), tuple(phi))


def product_weights(x: np.ndarray) -> np.ndarray:
    """Probability of every bitmask under independent inclusion with marginals x."""
    p = np.ones(1)
    for xj in x:
        p = np.concatenate([p * (1.0 - xj), p * xj])
    return p


def _check_fractional(x, m: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m,):
        raise ValueError(f"fractional vector must have length {m}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("fractional vector entries must lie in [0, 1]")
    return x


def multilinear_table(tab: np.ndarray, x: np.ndarray) -> float:
    return float(product_weights(x) @ tab)


def sample_masks(x: np.ndarray, trials: int, seed: int, shard: int = 0) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, shard])))
    draws = rng.random((trials, len(x))) < x
    return (draws * (1 << np.arange(len(x), dtype=np.int64))).sum(axis=1)


def multilinear(valuation: Valuation, x, mode: str = "exact", trials: int = 10000, seed: int = 0):
    """Multilinear extension F(x).

    Returns ``(value, stderr)``; ``stderr`` is None in exact mode.  The Monte
    Carlo estimate is deterministic in ``seed``.
    """
    m = valuation.num_items
    x = _check_fractional(x, m)
    if mode == "exact":
        if m > EXACT_MULTILINEAR_MAX:
            raise ValueError(f"exact multilinear needs num_items <= {EXACT_MULTILINEAR_MAX}")
        return multilinear_table(value_table(valuation), x), None
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    masks = sample_masks(x, trials, seed)
    if m <= TABLE_MAX_ITEMS:
        vals = value_table(valuation)[masks]
    else:
        vals = np.array([valuation.value(mask_items(int(s))) for s in masks])
    stderr = float(vals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return float(vals.mean()), stderr


def concave_extension(valuation: Valuation, x):
    """Concave extension f+(x) and an optimal distribution over sets.

    Solved as an LP over all 2^m sets, so ``num_items`` is capped at 16.
    """
    m = valuation.num_items
    if m > CONCAVE_MAX_ITEMS:
        raise ValueError(f"concave extension needs num_items <= {CONCAVE_MAX_ITEMS}")
    x = _check_fractional(x, m)
    tab = value_table(valuation)
    masks = np.arange(1 << m)
    inc = ((masks[None, :] >> np.arange(m)[:, None]) & 1).astype(float)
    rows = [_lp.Row(np.ones(1 << m), "<=", 1.0)]
    rows += [_lp.Row(inc[j], "=", float(x[j])) for j in range(m)]
    sol = _lp.solve_lp(_lp.LinearProgram(tab.astype(float), rows))
    if sol.status != "optimal":
        raise RuntimeError(f"concave-extension LP returned status {sol.status}")
    support = [(mask_items(int(s)), float(a)) for s, a in enumerate(sol.primal) if a > 1e-12]
    return sol.objective, support


@dataclass(frozen=True, eq=False)
class ProxyFunction:
    """Greedy proxy of ``base`` for a partition of the items into blocks.

    proxy(S) = min over T subset of S of  v(T) + sum_{j in S minus T} phi_j,
    where phi_j is j's greedy marginal gain inside its own block.
    """

    base: Valuation
    blocks: tuple
    phi: np.ndarray

    @property
    def num_items(self) -> int:
        return self.base.num_items

    def value(self, items) -> float:
        return proxy_eval(self, items)


def make_proxy(base: Valuation, blocks: Sequence[Sequence[int]]) -> ProxyFunction:
    m = base.num_items
    seen = sorted(j for b in blocks for j in b)
    if seen != list(range(m)):
        raise ValueError("blocks must partition the item universe")
    phi = np.zeros(m)
    for b in blocks:
        g = greedy_order(base, b)
        for j, ph in zip(g.order, g.phi):
            phi[j] = ph
    phi.setflags(write=False)
    return ProxyFunction(base, tuple(tuple(sorted(b)) for b in blocks), phi)


def _subset_masks(items: Sequence[int], weights: np.ndarray):
    """All sub-masks of ``items`` and their weight sums, by doubling."""
    masks = np.zeros(1, dtype=np.int64)
    sums = np.zeros(1)
    for j in items:
        masks = np.concatenate([masks, masks | (1 << j)])
        sums = np.concatenate([sums, sums + weights[j]])
    return masks, sums


def proxy_eval(proxy: ProxyFunction, s: Iterable[int]) -> float:
    items = _check_items(s, proxy.num_items)
    if len(items) > PROXY_MAX_SET:
        raise ValueError(f"proxy_eval needs |S| <= {PROXY_MAX_SET}")
    phi_total = float(sum(proxy.phi[j] for j in items))
    if proxy.num_items <= TABLE_MAX_ITEMS:
        masks, phis = _subset_masks(items, proxy.phi)
        return float(phi_total + np.min(value_table(proxy.base)[masks] - phis))
    best = np.inf
    for r in range(1 << len(items)):
        t = [items[i] for i in range(len(items)) if r >> i & 1]
        best = min(best, proxy.base.value(t) - sum(proxy.phi[j] for j in t))
    return float(phi_total + best)


def subset_min(g: np.ndarray) -> np.ndarray:
    """h(S) = min over T subset of S of g(T), in O(m 2^m)."""
    h = g.copy()
    m = len(h).bit_length() - 1
    for j in range(m):
        step = 1 << j
        v = h.reshape(-1, 2 * step)
        np.minimum(v[:, step:], v[:, :step], out=v[:, step:])
    return h


def proxy_table_from(tab: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Proxy values for every mask, given the base table and per-item phi."""
    _, phi_sum = _subset_masks(range(len(phi)), phi)
    return phi_sum + subset_min(tab - phi_sum)


def proxy_table(proxy: ProxyFunction) -> np.ndarray:
    if proxy.num_items > TABLE_MAX_ITEMS:
        raise ValueError("proxy table needs a small universe")
    return proxy_table_from(value_table(proxy.base), np.asarray(proxy.phi))
