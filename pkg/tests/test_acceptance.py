"""Acceptance criteria, each at its stated tolerance and runtime.

Every test records one PASS/FAIL line, listed again in the terminal summary.
Criteria 4 and 5 certify whole parameter regions and take several minutes.
"""
import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from nswkit import mpverify as mv
from nswkit import properties
from nswkit.conflp import solve_conflp_exact
from nswkit.core import brute_force_opt, random_instance
from nswkit.gapgen import (AdditiveGapParams, SubmodularGapParams, eval_additive_gap, eval_square,
                           eval_submodular_gap, gen_square_instance)

SEED = 20240601


def _check(number, conditions, elapsed, limit, extra=""):
    ok = all(conditions.values()) and elapsed < limit
    failed = [k for k, v in conditions.items() if not v]
    if elapsed >= limit:
        failed.append(f"runtime {elapsed:.1f}s >= {limit}s")
    lim = "none" if math.isinf(limit) else f"{limit}s"
    detail = f"{elapsed:.2f}s (limit {lim}) {extra}".strip()
    if failed:
        detail += " | failed: " + ", ".join(failed)
    record_criterion(number, ok, detail)
    assert ok, detail


def test_criterion_01_square_gap():
    t0 = time.perf_counter()
    rep = eval_square(1e6)
    expected = (2e6 / (1e6 + 1)) ** 0.25
    _, opt5 = brute_force_opt(gen_square_instance(5.0))
    elapsed = time.perf_counter() - t0
    _check(1, {"ratio(1e6)": abs(rep.ratio - expected) <= 1e-4,
               "brute force t=5": abs(opt5 - 0.25 * math.log(2 * 5 * 6)) <= 1e-9},
           elapsed, 5, f"ratio={rep.ratio:.6f} log_iopt(5)={opt5:.12f}")


def test_criterion_02_additive_gap():
    t0 = time.perf_counter()
    rep = eval_additive_gap(AdditiveGapParams(1000, 632, 1e9, 1e-6))
    elapsed = time.perf_counter() - t0
    _check(2, {"ratio >= 1.4445": rep.ratio >= 1.4445, "residual <= 1e-9": rep.feasibility_max_residual <= 1e-9},
           elapsed, 5, f"ratio={rep.ratio:.6f} residual={rep.feasibility_max_residual:.1e}")


def test_criterion_03_submodular_gap():
    t0 = time.perf_counter()
    reps = [eval_submodular_gap(SubmodularGapParams(k, int(math.floor(k * math.log(2))), 1e12, 1e-6))
            for k in (10, 100, 1000)]
    elapsed = time.perf_counter() - t0
    ratios = [r.ratio for r in reps]
    _check(3, {"ratio(k=1000) >= 1.61": ratios[-1] >= 1.61,
               "monotone in k": ratios[0] < ratios[1] < ratios[2],
               "residual <= 1e-9": max(r.feasibility_max_residual for r in reps) <= 1e-9},
           elapsed, 5, "ratios=" + ", ".join(f"{r:.6g}" for r in ratios))


def test_criterion_03_supplement_large_t():
    # same family once t dominates r = k^(k lam); not a substitute for the criterion above
    reps = [eval_submodular_gap(SubmodularGapParams(k, int(math.floor(k * math.log(2))), eps=1e-6,
                                                    log_t=k * int(math.floor(k * math.log(2))) * math.log(k) + 60))
            for k in (10, 100, 1000)]
    ratios = [r.ratio for r in reps]
    assert ratios[0] < ratios[1] < ratios[2]
    assert ratios[2] >= 1.61


def test_criterion_04_mp3_region():
    t0 = time.perf_counter()
    rep = mv.verify_region("mp3", mv.MP3_REGION_SMALL, 3.56)
    fp = mv.check_feasible_point()
    elapsed = time.perf_counter() - t0
    _check(4, {"region certified": rep.certified, "objective > 1.2588": fp.objective > 1.2588,
               "k within 0.01 of 4.096": abs(fp.k - 4.096) <= 0.01},
           elapsed, 1800, f"boxes={rep.boxes_certified} lp_solves={rep.lp_solves} depth={rep.depth} "
                          f"max_bound={rep.max_certified_bound:.6f} failures={len(rep.failures)} "
                          f"feasible k={fp.k:.5f} obj={fp.objective:.7f}")


MP5_SPOT_BOXES = [(10, 20, 5, 10), (100, 200, 50, 100), (1, 2, 1, 3), (1, 1000, 10000, 30000), (50, 100, 1, 5)]


def test_criterion_05_mp5_region():
    t0 = time.perf_counter()
    spots = [mv.verify_region("mp5", mv.Mp3Box(*b), 3.45) for b in MP5_SPOT_BOXES]
    spot_time = time.perf_counter() - t0
    rep = mv.verify_region("mp5", mv.MP5_REGION, 3.45)
    elapsed = time.perf_counter() - t0
    _check(5, {"region certified": rep.certified,
               "spot boxes certified": all(s.certified for s in spots),
               "spot boxes <= 20 LPs": all(s.lp_solves <= 20 for s in spots),
               "spot boxes < 60 s": spot_time < 60},
           elapsed, 1800, f"boxes={rep.boxes_certified} lp_solves={rep.lp_solves} depth={rep.depth} "
                          f"max_bound={rep.max_certified_bound:.6f} failures={len(rep.failures)} "
                          f"spot_lps={[s.lp_solves for s in spots]} spot_time={spot_time:.2f}s")


def test_criterion_06_analytic_constants():
    t0 = time.perf_counter()
    a = mv.tail_bound_eval(3.6e5, 0.0079, "mp3")
    b = mv.tail_bound_eval(1000, 0.14, "mp5")
    elapsed = time.perf_counter() - t0
    _check(6, {"mp3 y < 0.000182": a.y < 0.000182, "mp3 exp < 3.55908": a.exp_combined < 3.55908,
               "mp5 y < 0.000409": b.y < 0.000409, "mp5 exp < 3.418": b.exp_combined < 3.418},
           elapsed, 1, f"mp3 y={a.y:.4e} exp={a.exp_combined:.7f}; mp5 y={b.y:.4e} exp={b.exp_combined:.6f}")


def test_criterion_07_proxy_properties():
    t0 = time.perf_counter()
    res = properties.proxy_properties(np.random.default_rng(SEED), count=200, max_items=10, tol=1e-9)
    elapsed = time.perf_counter() - t0
    _check(7, {"properties (a)-(d)": res.passed}, elapsed, 120, f"cases={res.cases} worst={res.worst:.2e}")


def test_criterion_08_extension_sandwich():
    t0 = time.perf_counter()
    res = properties.extension_sandwich(np.random.default_rng(SEED), count=100, max_items=12, tol=1e-7)
    elapsed = time.perf_counter() - t0
    _check(8, {"sandwich": res.passed}, elapsed, 300, f"cases={res.cases} worst={res.worst:.2e}")


def test_criterion_09_rounding_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    trials = 100_000
    one_large, marg, mgf, conc = True, math.inf, math.inf, math.inf
    for case in range(50):
        inst, sol = properties.random_rounding_case(rng, max_agents=4, max_items=10)
        rc = properties.rounding_instance_check(inst, sol, SEED + case, trials)
        one_large &= rc.one_large
        marg, mgf, conc = min(marg, rc.marginal_margin), min(mgf, rc.mgf_margin), min(conc, rc.conc_margin)
    pip = properties.pipage_suite(rng, count=50, trials=trials, seed=SEED)
    elapsed = time.perf_counter() - t0
    _check(9, {"one large item": one_large, "marginals within 4 sigma": marg >= 0,
               "pipage E[f] and MGF": pip.passed, "MGF (greedy-proxy form)": mgf >= 0,
               "MGF (class form)": conc >= 0},
           elapsed, 1200, f"margins: marginal={marg:.2e} mgf={mgf:.2e} conc={conc:.2e} pipage={pip.worst:.2e}")


def test_criterion_10_end_to_end():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst_excess, worst_sanity = -math.inf, math.inf
    cases = [(gen_square_instance(5.0))] + [random_instance(int(rng.integers(2, 5)), int(rng.integers(4, 11)), rng)
                                            for _ in range(20)]
    ratios = []
    for idx, inst in enumerate(cases):
        sol = solve_conflp_exact(inst)
        out = properties.end_to_end(inst, sol, SEED + idx, 10_000)
        ratios.append(out["ratio"])
        worst_excess = max(worst_excess, out["ratio"] - (3.56 + 5 * out["ratio_stderr"]))
        if inst.num_items <= 12:
            worst_sanity = min(worst_sanity, properties.brute_force_sanity(inst, sol))
    elapsed = time.perf_counter() - t0
    _check(10, {"ratio <= 3.56 + 5 stderr": worst_excess <= 0, "exp(LP)/exp(OPT) >= 1": worst_sanity >= 1 - 1e-9},
           elapsed, math.inf, f"instances={len(cases)} max_ratio={max(ratios):.4f} "
                              f"min exp(LP)/exp(OPT)={worst_sanity:.6f}")
