"""Compare the compiled rounding kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--trials 2000] [--repeat 3]

Both backends are fed the same multigraph and the same per-trial seeds; the
script also asserts that they return identical rounded rows.
"""
import argparse
import time

import numpy as np

from nswkit import _kernels_py, rounding
from nswkit._backend import derive_seeds
from nswkit.properties import random_rounding_case

try:
    from nswkit import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_graph(g, trials, repeat):
    seeds = derive_seeds(7, "round", trials)
    args = (g.n, g.m, g.agent, g.item, g.x, g.marked)
    t_py, r_py = _best(lambda: _kernels_py.round_trials(*args, seeds), repeat)
    row = {"edges": g.num_edges, "python_s": t_py}
    if _kernels_c is not None:
        t_c, r_c = _best(lambda: _kernels_c.round_trials(*args, seeds), repeat)
        assert np.array_equal(np.asarray(r_py), np.asarray(r_c)), "backends disagree"
        row.update(cython_s=t_c, speedup=t_py / t_c)
    return row


def bench_pipage(m, trials, repeat, rng):
    x = rng.random(m)
    seeds = derive_seeds(7, "pipage", trials)
    t_py, r_py = _best(lambda: _kernels_py.pipage_trials(x, seeds), repeat)
    row = {"items": m, "python_s": t_py}
    if _kernels_c is not None:
        t_c, r_c = _best(lambda: _kernels_c.pipage_trials(x, seeds), repeat)
        assert np.array_equal(np.asarray(r_py), np.asarray(r_c)), "backends disagree"
        row.update(cython_s=t_c, speedup=t_py / t_c)
    return row


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(2024)
    print(f"compiled backend available: {_kernels_c is not None}")
    print(f"{'kernel':<10}{'size':>8}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for agents, items in [(2, 6), (4, 10), (6, 16)]:
        inst, sol = random_rounding_case(rng, max_agents=agents, max_items=items)
        r = bench_graph(rounding.build_multigraph(inst, sol), args.trials, args.repeat)
        print(f"{'round':<10}{r['edges']:>8}{r['python_s']:>12.4f}{r.get('cython_s', float('nan')):>12.4f}"
              f"{r.get('speedup', float('nan')):>10.1f}")
    for m in (8, 32, 128):
        r = bench_pipage(m, args.trials, args.repeat, rng)
        print(f"{'pipage':<10}{r['items']:>8}{r['python_s']:>12.4f}{r.get('cython_s', float('nan')):>12.4f}"
              f"{r.get('speedup', float('nan')):>10.1f}")


if __name__ == "__main__":
    main()
