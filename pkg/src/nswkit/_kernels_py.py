"""Pure-Python rounding kernels.

Mirrors ``_kernels.pyx`` operation for operation, including the splitmix64
stream, so both backends produce bitwise-identical trials.
"""
from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
SNAP = 1e-9  # absorbs LP round-off in the input

NONE, CYCLE, PATH = 0, 1, 2


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def next_double(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)


def _adjacency(nv, ends_a, ends_b):
    adj = [[] for _ in range(nv)]
    for e in range(len(ends_a)):
        adj[ends_a[e]].append(e)
        adj[ends_b[e]].append(e)
    return adj


def _is_frac(v):
    return 0.0 < v < 1.0


def find_structure(n, m, agent, item, x, marked):
    """Return (kind, edges, signs); kind is NONE, CYCLE or PATH.

    NONE with no fractional edge left means the rounding is finished.
    """
    E = len(x)
    nv = n + m
    va = [int(a) for a in agent]
    vb = [n + int(j) for j in item]
    adj = _adjacency(nv, va, vb)
    fm = [bool(marked[e]) and _is_frac(x[e]) for e in range(E)]
    # marked cycle: DFS over fractional marked edges, lowest index first
    visited = [False] * nv
    on_stack = [False] * nv
    parent_edge = [-1] * nv
    for root in range(nv):
        if visited[root]:
            continue
        visited[root] = True
        on_stack[root] = True
        stack = [(root, 0)]
        while stack:
            v, ptr = stack[-1]
            lst = adj[v]
            advanced = False
            while ptr < len(lst):
                e = lst[ptr]
                ptr += 1
                if not fm[e] or e == parent_edge[v]:
                    continue
                w = vb[e] if va[e] == v else va[e]
                if on_stack[w]:
                    cyc = [e]
                    u = v
                    while u != w:
                        pe = parent_edge[u]
                        cyc.append(pe)
                        u = vb[pe] if va[pe] == u else va[pe]
                    return CYCLE, cyc, [1 if k % 2 == 0 else -1 for k in range(len(cyc))]
                if not visited[w]:
                    stack[-1] = (v, ptr)
                    visited[w] = True
                    on_stack[w] = True
                    parent_edge[w] = e
                    stack.append((w, 0))
                    advanced = True
                    break
            if not advanced:
                on_stack[v] = False
                stack.pop()
    # pseudo-marked path between two leaf items of the fractional marked forest
    deg = [0] * nv
    for e in range(E):
        if fm[e]:
            deg[va[e]] += 1
            deg[vb[e]] += 1

    def first_unmarked(v):
        for e in adj[v]:
            if not marked[e] and _is_frac(x[e]):
                return e
        return -1

    for j in range(n, nv):
        if deg[j] != 1:
            continue
        seen = [False] * nv
        pe = [-1] * nv
        seen[j] = True
        stack = [(j, 0)]
        target = -1
        while stack and target < 0:
            v, ptr = stack[-1]
            lst = adj[v]
            advanced = False
            while ptr < len(lst):
                e = lst[ptr]
                ptr += 1
                if not fm[e]:
                    continue
                w = vb[e] if va[e] == v else va[e]
                if seen[w]:
                    continue
                seen[w] = True
                pe[w] = e
                if w >= n and deg[w] == 1:
                    target = w
                    break
                stack[-1] = (v, ptr)
                stack.append((w, 0))
                advanced = True
                break
            if target < 0 and not advanced:
                stack.pop()
        if target < 0:
            raise RuntimeError("fractional marked tree with a single leaf item")
        path = []
        u = target
        while u != j:
            e = pe[u]
            path.append(e)
            u = vb[e] if va[e] == u else va[e]
        path.reverse()
        ea, eb = first_unmarked(j), first_unmarked(target)
        if ea < 0 or eb < 0:
            raise RuntimeError("leaf item without a fractional unmarked edge")
        edges = [ea] + path + [eb]
        return PATH, edges, [1 if k % 2 == 0 else -1 for k in range(len(edges))]
    if any(fm):
        raise RuntimeError("fractional marked forest without leaf items")
    # no fractional marked edge: an item with two fractional unmarked edges
    any_frac = False
    for j in range(n, nv):
        fr = [e for e in adj[j] if _is_frac(x[e])]
        if fr:
            any_frac = True
        if len(fr) >= 2:
            return PATH, [fr[0], fr[1]], [1, -1]
    if any_frac:
        raise RuntimeError("fractional edges remain but no rounding structure exists")
    return NONE, [], []


def rotate(x, edges, signs, u):
    """Apply the two-outcome rotation in place; ``u`` is a uniform draw."""
    d1 = 2.0
    d2 = 2.0
    for e, s in zip(edges, signs):
        if s > 0:
            d1 = min(d1, x[e])
            d2 = min(d2, 1.0 - x[e])
        else:
            d1 = min(d1, 1.0 - x[e])
            d2 = min(d2, x[e])
    tot = d1 + d2
    if not tot > 0.0:
        raise RuntimeError("degenerate rotation")
    if u < d2 / tot:
        step = -d1
    else:
        step = d2
    for e, s in zip(edges, signs):
        v = x[e] + step if s > 0 else x[e] - step
        if v < SNAP:
            v = 0.0
        elif v > 1.0 - SNAP:
            v = 1.0
        x[e] = v


def _snapped(x0):
    return [0.0 if v < SNAP else 1.0 if v > 1.0 - SNAP else float(v) for v in x0]


def round_graph(n, m, agent, item, x0, marked, seed):
    x = _snapped(x0)
    rng = SplitMix64(seed)
    cap = 10 * len(x) + 10
    for _ in range(cap):
        kind, edges, signs = find_structure(n, m, agent, item, x, marked)
        if kind == NONE:
            return np.array(x)
        rotate(x, edges, signs, rng.next_double())
    raise RuntimeError("rounding iteration cap exceeded")


def round_trials(n, m, agent, item, x0, marked, seeds):
    out = np.empty((len(seeds), len(x0)), dtype=np.uint8)
    for t, s in enumerate(seeds):
        out[t] = round_graph(n, m, agent, item, x0, marked, int(s)) > 0.5
    return out


def pipage(x0, seed):
    """Default schedule: first two fractional coordinates, saturating steps."""
    x = _snapped(x0)
    rng = SplitMix64(seed)
    while True:
        a = b = -1
        for k in range(len(x)):
            if 0.0 < x[k] < 1.0:
                if a < 0:
                    a = k
                else:
                    b = k
                    break
        if a < 0:
            return np.array(x)
        if b < 0:
            edges, signs = [a], [1]
        else:
            edges, signs = [a, b], [1, -1]
        rotate(x, edges, signs, rng.next_double())


def pipage_trials(x0, seeds):
    out = np.empty((len(seeds), len(x0)), dtype=np.uint8)
    for t, s in enumerate(seeds):
        out[t] = pipage(x0, int(s)) > 0.5
    return out
