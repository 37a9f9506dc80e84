# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rounding kernels.  Must stay in lockstep with _kernels_py.py."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef extern from *:
    """
    #define NSW_SNAP 1e-9
    """
    double SNAP "NSW_SNAP"

cdef int NONE = 0
cdef int CYCLE = 1
cdef int PATH = 2


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double next_double(uint64_t* state) nogil:
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15ULL
    return (mix64(state[0]) >> 11) * (1.0 / 9007199254740992.0)


cdef inline bint is_frac(double v) nogil:
    return 0.0 < v and v < 1.0


cdef struct Graph:
    int n
    int m
    int E
    int nv
    int* va
    int* vb
    unsigned char* marked
    int* adj_ptr
    int* adj
    # scratch
    int* visited
    int* on_stack
    int* parent_edge
    int* deg
    int* stk_v
    int* stk_p
    unsigned char* fm


cdef inline int other(Graph* g, int e, int v) nogil:
    if g.va[e] == v:
        return g.vb[e]
    return g.va[e]


cdef int first_unmarked(Graph* g, double* x, int v) nogil:
    cdef int k, e
    for k in range(g.adj_ptr[v], g.adj_ptr[v + 1]):
        e = g.adj[k]
        if not g.marked[e] and is_frac(x[e]):
            return e
    return -1


cdef int find_structure_c(Graph* g, double* x, int* edges, int* signs, int* length) nogil:
    """Returns kind; -1 on structural error."""
    cdef int E = g.E, nv = g.nv, n = g.n
    cdef int e, v, w, u, k, root, top, ptr, pe, j, target, L, cnt, e0, e1
    cdef bint advanced, any_frac
    for e in range(E):
        g.fm[e] = g.marked[e] and is_frac(x[e])
    for v in range(nv):
        g.visited[v] = 0
        g.on_stack[v] = 0
        g.parent_edge[v] = -1
    for root in range(nv):
        if g.visited[root]:
            continue
        g.visited[root] = 1
        g.on_stack[root] = 1
        top = 0
        g.stk_v[0] = root
        g.stk_p[0] = g.adj_ptr[root]
        while top >= 0:
            v = g.stk_v[top]
            ptr = g.stk_p[top]
            advanced = False
            while ptr < g.adj_ptr[v + 1]:
                e = g.adj[ptr]
                ptr += 1
                if not g.fm[e] or e == g.parent_edge[v]:
                    continue
                w = other(g, e, v)
                if g.on_stack[w]:
                    L = 0
                    edges[L] = e
                    L += 1
                    u = v
                    while u != w:
                        pe = g.parent_edge[u]
                        edges[L] = pe
                        L += 1
                        u = other(g, pe, u)
                    for k in range(L):
                        signs[k] = 1 if k % 2 == 0 else -1
                    length[0] = L
                    return CYCLE
                if not g.visited[w]:
                    g.stk_p[top] = ptr
                    g.visited[w] = 1
                    g.on_stack[w] = 1
                    g.parent_edge[w] = e
                    top += 1
                    g.stk_v[top] = w
                    g.stk_p[top] = g.adj_ptr[w]
                    advanced = True
                    break
            if not advanced:
                g.on_stack[v] = 0
                top -= 1
    for v in range(nv):
        g.deg[v] = 0
    for e in range(E):
        if g.fm[e]:
            g.deg[g.va[e]] += 1
            g.deg[g.vb[e]] += 1
    for j in range(n, nv):
        if g.deg[j] != 1:
            continue
        for v in range(nv):
            g.visited[v] = 0
            g.parent_edge[v] = -1
        g.visited[j] = 1
        top = 0
        g.stk_v[0] = j
        g.stk_p[0] = g.adj_ptr[j]
        target = -1
        while top >= 0 and target < 0:
            v = g.stk_v[top]
            ptr = g.stk_p[top]
            advanced = False
            while ptr < g.adj_ptr[v + 1]:
                e = g.adj[ptr]
                ptr += 1
                if not g.fm[e]:
                    continue
                w = other(g, e, v)
                if g.visited[w]:
                    continue
                g.visited[w] = 1
                g.parent_edge[w] = e
                if w >= n and g.deg[w] == 1:
                    target = w
                    break
                g.stk_p[top] = ptr
                top += 1
                g.stk_v[top] = w
                g.stk_p[top] = g.adj_ptr[w]
                advanced = True
                break
            if target < 0 and not advanced:
                top -= 1
        if target < 0:
            return -1
        # edges[0] is the first unmarked edge, then the marked path j -> target
        L = 0
        u = target
        while u != j:
            L += 1
            u = other(g, g.parent_edge[u], u)
        u = target
        k = L
        while u != j:
            pe = g.parent_edge[u]
            edges[k] = pe
            k -= 1
            u = other(g, pe, u)
        e0 = first_unmarked(g, x, j)
        e1 = first_unmarked(g, x, target)
        if e0 < 0 or e1 < 0:
            return -1
        edges[0] = e0
        edges[L + 1] = e1
        length[0] = L + 2
        for k in range(L + 2):
            signs[k] = 1 if k % 2 == 0 else -1
        return PATH
    for e in range(E):
        if g.fm[e]:
            return -1
    any_frac = False
    for j in range(n, nv):
        cnt = 0
        for k in range(g.adj_ptr[j], g.adj_ptr[j + 1]):
            e = g.adj[k]
            if is_frac(x[e]):
                any_frac = True
                if cnt < 2:
                    edges[cnt] = e
                cnt += 1
        if cnt >= 2:
            signs[0] = 1
            signs[1] = -1
            length[0] = 2
            return PATH
    if any_frac:
        return -1
    length[0] = 0
    return NONE


cdef int rotate_c(double* x, int* edges, int* signs, int L, double u) nogil:
    cdef double d1 = 2.0, d2 = 2.0, tot, step, v
    cdef int k, e
    for k in range(L):
        e = edges[k]
        if signs[k] > 0:
            d1 = min(d1, x[e])
            d2 = min(d2, 1.0 - x[e])
        else:
            d1 = min(d1, 1.0 - x[e])
            d2 = min(d2, x[e])
    tot = d1 + d2
    if not tot > 0.0:
        return -1
    if u < d2 / tot:
        step = -d1
    else:
        step = d2
    for k in range(L):
        e = edges[k]
        if signs[k] > 0:
            v = x[e] + step
        else:
            v = x[e] - step
        if v < SNAP:
            v = 0.0
        elif v > 1.0 - SNAP:
            v = 1.0
        x[e] = v
    return 0


cdef class _Work:
    cdef public object arrays

    def __init__(self, int n, int m, agent, item, marked):
        E = len(agent)
        nv = n + m
        va = np.ascontiguousarray(agent, dtype=np.int32)
        vb = np.ascontiguousarray(np.asarray(item, dtype=np.int32) + n, dtype=np.int32)
        deg = np.zeros(nv, dtype=np.int32)
        np.add.at(deg, va, 1)
        np.add.at(deg, vb, 1)
        ptr = np.zeros(nv + 1, dtype=np.int32)
        ptr[1:] = np.cumsum(deg)
        adj = np.empty(max(2 * E, 1), dtype=np.int32)
        fill = ptr[:-1].copy()
        for e in range(E):  # ascending edge order inside every list
            adj[fill[va[e]]] = e
            fill[va[e]] += 1
            adj[fill[vb[e]]] = e
            fill[vb[e]] += 1
        self.arrays = dict(
            va=va, vb=vb, marked=np.ascontiguousarray(marked, dtype=np.uint8), ptr=ptr, adj=adj,
            visited=np.zeros(nv, np.int32), on_stack=np.zeros(nv, np.int32), parent_edge=np.zeros(nv, np.int32),
            deg=np.zeros(nv, np.int32), stk_v=np.zeros(nv + 1, np.int32), stk_p=np.zeros(nv + 1, np.int32),
            fm=np.zeros(max(E, 1), np.uint8), edges=np.zeros(E + 2, np.int32), signs=np.zeros(E + 2, np.int32))


cdef void bind(Graph* g, _Work w, int n, int m, int E):
    cdef int[::1] va = w.arrays["va"]
    cdef int[::1] vb = w.arrays["vb"]
    cdef unsigned char[::1] mk = w.arrays["marked"]
    cdef int[::1] ptr = w.arrays["ptr"]
    cdef int[::1] adj = w.arrays["adj"]
    cdef int[::1] vis = w.arrays["visited"]
    cdef int[::1] ons = w.arrays["on_stack"]
    cdef int[::1] pe = w.arrays["parent_edge"]
    cdef int[::1] dg = w.arrays["deg"]
    cdef int[::1] sv = w.arrays["stk_v"]
    cdef int[::1] sp = w.arrays["stk_p"]
    cdef unsigned char[::1] fm = w.arrays["fm"]
    g.n = n
    g.m = m
    g.E = E
    g.nv = n + m
    g.va = &va[0] if E > 0 else NULL
    g.vb = &vb[0] if E > 0 else NULL
    g.marked = &mk[0] if E > 0 else NULL
    g.adj_ptr = &ptr[0]
    g.adj = &adj[0]
    g.visited = &vis[0]
    g.on_stack = &ons[0]
    g.parent_edge = &pe[0]
    g.deg = &dg[0]
    g.stk_v = &sv[0]
    g.stk_p = &sp[0]
    g.fm = &fm[0]


cdef int round_one(Graph* g, double* x, int* edges, int* signs, uint64_t seed) nogil:
    cdef uint64_t state = seed
    cdef int it, kind, L = 0
    cdef int cap = 10 * g.E + 10
    for it in range(cap):
        kind = find_structure_c(g, x, edges, signs, &L)
        if kind < 0:
            return -1
        if kind == NONE:
            return 0
        if rotate_c(x, edges, signs, L, next_double(&state)) < 0:
            return -1
    return -2


def find_structure(int n, int m, agent, item, x, marked):
    cdef int E = len(x)
    w = _Work(n, m, agent, item, marked)
    cdef Graph g
    bind(&g, w, n, m, E)
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).copy()
    cdef int[::1] ed = w.arrays["edges"]
    cdef int[::1] sg = w.arrays["signs"]
    cdef int L = 0
    cdef int kind = find_structure_c(&g, &xv[0] if E > 0 else NULL, &ed[0], &sg[0], &L)
    if kind < 0:
        raise RuntimeError("rounding structure search failed: invariants violated")
    return kind, [int(ed[k]) for k in range(L)], [int(sg[k]) for k in range(L)]


def rotate(x, edges, signs, double u):
    cdef double[::1] xv = x
    cdef int[::1] ed = np.asarray(edges, dtype=np.int32)
    cdef int[::1] sg = np.asarray(signs, dtype=np.int32)
    if rotate_c(&xv[0], &ed[0], &sg[0], len(edges), u) < 0:
        raise RuntimeError("degenerate rotation")


def round_graph(int n, int m, agent, item, x0, marked, seed):
    out = round_trials(n, m, agent, item, x0, marked, np.array([seed], dtype=np.uint64), raw=True)
    return out[0]


def round_trials(int n, int m, agent, item, x0, marked, seeds, raw=False):
    cdef int E = len(x0)
    cdef Py_ssize_t T = len(seeds), t
    cdef int k, status
    w = _Work(n, m, agent, item, marked)
    cdef Graph g
    bind(&g, w, n, m, E)
    cdef double[::1] base = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[::1] x = np.empty(max(E, 1), dtype=np.float64)
    cdef int[::1] ed = w.arrays["edges"]
    cdef int[::1] sg = w.arrays["signs"]
    cdef uint64_t[::1] sd = np.ascontiguousarray(seeds, dtype=np.uint64)
    res_raw = np.empty((T, E), dtype=np.float64) if raw else None
    res = np.empty((T, E), dtype=np.uint8)
    cdef unsigned char[:, ::1] rv = res
    cdef double[:, ::1] rr
    if raw:
        rr = res_raw
    for t in range(T):
        for k in range(E):
            x[k] = base[k]
            if x[k] < SNAP:
                x[k] = 0.0
            elif x[k] > 1.0 - SNAP:
                x[k] = 1.0
        with nogil:
            status = round_one(&g, &x[0], &ed[0], &sg[0], sd[t])
        if status == -2:
            raise RuntimeError("rounding iteration cap exceeded")
        if status < 0:
            raise RuntimeError("fractional edges remain but no rounding structure exists")
        for k in range(E):
            rv[t, k] = 1 if x[k] > 0.5 else 0
            if raw:
                rr[t, k] = x[k]
    return res_raw if raw else res


cdef void pipage_one(double* x, int nx, uint64_t seed, int* edges, int* signs) nogil:
    cdef uint64_t state = seed
    cdef int k, a, b
    for k in range(nx):
        if x[k] < SNAP:
            x[k] = 0.0
        elif x[k] > 1.0 - SNAP:
            x[k] = 1.0
    while True:
        a = -1
        b = -1
        for k in range(nx):
            if 0.0 < x[k] and x[k] < 1.0:
                if a < 0:
                    a = k
                else:
                    b = k
                    break
        if a < 0:
            return
        edges[0] = a
        signs[0] = 1
        if b < 0:
            rotate_c(x, edges, signs, 1, next_double(&state))
        else:
            edges[1] = b
            signs[1] = -1
            rotate_c(x, edges, signs, 2, next_double(&state))


def pipage(x0, seed):
    cdef double[::1] x = np.ascontiguousarray(x0, dtype=np.float64).copy()
    cdef int edges[2]
    cdef int signs[2]
    pipage_one(&x[0], len(x), <uint64_t>seed, edges, signs)
    return np.asarray(x)


def pipage_trials(x0, seeds):
    cdef int nx = len(x0), k
    cdef Py_ssize_t T = len(seeds), t
    cdef double[::1] base = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[::1] x = np.empty(max(nx, 1), dtype=np.float64)
    cdef uint64_t[::1] sd = np.ascontiguousarray(seeds, dtype=np.uint64)
    res = np.empty((T, nx), dtype=np.uint8)
    cdef unsigned char[:, ::1] rv = res
    cdef int edges[2]
    cdef int signs[2]
    for t in range(T):
        for k in range(nx):
            x[k] = base[k]
        with nogil:
            pipage_one(&x[0], nx, sd[t], edges, signs)
        for k in range(nx):
            rv[t, k] = 1 if x[k] > 0.5 else 0
    return res
