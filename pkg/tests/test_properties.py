import math

import numpy as np
import pytest

from nswkit import properties
from nswkit.conflp import solve_conflp_exact
from nswkit.core import random_instance


def test_proxy_suite_small(rng):
    res = properties.proxy_properties(rng, count=20, max_items=7)
    assert res.passed and res.cases == 20


def test_sandwich_suite_small(rng):
    assert properties.extension_sandwich(rng, count=15, max_items=8).passed


def test_pipage_suite_small(rng):
    res = properties.pipage_suite(rng, count=3, trials=20000, seed=4)
    assert res.passed, res.detail


def test_negative_correlation_small(rng):
    assert properties.negative_correlation_suite(rng, count=3, trials=20000, seed=4).passed


def test_pipage_bound_at_zero_lambda():
    assert properties.pipage_bound(0.0, 2.0, 1.0, 0.3) == 1.0


def test_rounding_check_small(rng):
    inst, sol = properties.random_rounding_case(rng)
    rc = properties.rounding_instance_check(inst, sol, seed=1, trials=20000)
    assert rc.one_large
    assert min(rc.marginal_margin, rc.mgf_margin, rc.conc_margin) >= 0
    assert len(rc.stats) == inst.num_agents


def test_end_to_end_and_sanity(rng):
    inst = random_instance(3, 6, rng)
    sol = solve_conflp_exact(inst)
    out = properties.end_to_end(inst, sol, seed=2, trials=5000)
    assert out["ratio"] <= 3.56 + 5 * out["ratio_stderr"]
    assert properties.brute_force_sanity(inst, sol) >= 1 - 1e-9


def test_check_result_json():
    d = properties.CheckResult("x", True, 3, 0.5, {"a": 1}).to_dict()
    assert d == {"name": "x", "passed": True, "cases": 3, "worst_margin": 0.5, "detail": {"a": 1}}
