import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nswkit import conflp
from nswkit.conflp import (FractionalSolution, adjusted_lp_objective, check_solution, column_generation_solve,
                           config_split, modified_greedy_knapsack, plain_objective, solve_conflp_exact)
from nswkit.core import Additive, Agent, Instance, random_coverage, random_instance, value_table
from nswkit.gapgen import AdditiveGapParams, additive_fractional_solution, gen_additive_gap, gen_square_instance
from nswkit.submodular import greedy_order


def test_exact_single_agent(rng):
    val = random_coverage(5, 6, rng)
    inst = Instance(5, (Agent(1.0, val),))
    sol = solve_conflp_exact(inst)
    assert sol.lp_value == pytest.approx(math.log(val.value(range(5))))
    (i, s, y), = [e for e in sol.entries if e[2] > 1e-9]
    assert s == tuple(range(5)) and y == pytest.approx(1)


def test_exact_square_lower_bound():
    t = 5.0
    sol = solve_conflp_exact(gen_square_instance(t))
    assert sol.lp_value >= 0.5 * math.log(2 * t) - 1e-9


def test_exact_symmetric_split():
    inst = Instance(2, (Agent(0.5, Additive((1, 1))), Agent(0.5, Additive((1, 1)))))
    assert solve_conflp_exact(inst).lp_value == pytest.approx(0, abs=1e-9)


def test_exact_size_guard():
    inst = Instance(17, (Agent(1.0, Additive(tuple([1.0] * 17))),))
    with pytest.raises(ValueError):
        solve_conflp_exact(inst)


def test_solution_json_round_trip(rng):
    sol = solve_conflp_exact(random_instance(2, 5, rng))
    back = FractionalSolution.from_dict(sol.to_dict())
    assert back.lp_value == sol.lp_value
    assert [(i, s) for i, s, _ in back.entries] == [(i, s) for i, s, _ in sol.entries]


def test_knapsack_everything_affordable(rng):
    val = random_coverage(6, 6, rng)
    costs = rng.random(6)
    assert modified_greedy_knapsack(val, costs, costs.sum() + 1) == tuple(range(6))


def test_knapsack_nothing_affordable(rng):
    val = random_coverage(6, 6, rng)
    costs = rng.random(6) + 1
    assert modified_greedy_knapsack(val, costs, 0.5) == ()


def _budget_optimum(tab, costs, budget, m):
    best, best_mask = -1.0, 0
    for mask in range(1 << m):
        c = sum(costs[j] for j in range(m) if mask >> j & 1)
        if c <= budget + 1e-12 and tab[mask] > best:
            best, best_mask = tab[mask], mask
    return best_mask


@given(st.integers(0, 2**32 - 1))
def test_knapsack_guarantee(seed):
    r = np.random.default_rng(seed)
    m = int(r.integers(3, 10))
    enum_size = 3
    val = random_coverage(m, int(r.integers(4, 10)), r)
    costs = r.random(m)
    budget = float(r.random() * costs.sum())
    tab = value_table(val)
    s = modified_greedy_knapsack(val, costs, budget, enum_size)
    assert costs[list(s)].sum() <= budget + 1e-9
    o_mask = _budget_optimum(tab, costs, budget, m)
    o = [j for j in range(m) if o_mask >> j & 1]
    o_enu = greedy_order(val, o).order[:enum_size]
    v_o, v_enu = val.value(o), val.value(o_enu)
    eps = 1 / enum_size
    assert val.value(s) >= (1 - eps) * v_enu + (1 - 1 / math.e) * (v_o - v_enu) - 1e-9


def test_config_split():
    val = Additive((3, 1, 2, 5))
    sp = config_split(val, (0, 1, 2, 3), 2)
    assert sp.enumerated == (0, 3) and sp.rest == (1, 2)


def test_adjusted_objective_small_configs_equal_plain(rng):
    inst = random_instance(3, 6, rng)
    sol = solve_conflp_exact(inst)
    big = max(len(s) for _, s, _ in sol.entries)
    assert adjusted_lp_objective(inst, sol, enum_size=big) == pytest.approx(plain_objective(inst, sol))


def test_adjusted_objective_additive_singletons():
    inst = Instance(2, (Agent(0.4, Additive((2, 1))), Agent(0.6, Additive((1, 3)))))
    sol = FractionalSolution([(0, (0,), 1.0), (1, (1,), 1.0)], 0.4 * math.log(2) + 0.6 * math.log(3))
    assert adjusted_lp_objective(inst, sol, 1) == pytest.approx(plain_objective(inst, sol))


def test_adjusted_objective_dominates_plain(rng):
    inst = random_instance(3, 10, rng)
    sol = column_generation_solve(inst)
    assert adjusted_lp_objective(inst, sol) >= plain_objective(inst, sol) - 1e-12


def test_column_generation_single_agent(rng):
    val = random_coverage(7, 6, rng)
    sol = column_generation_solve(Instance(7, (Agent(1.0, val),)))
    assert sol.lp_value == pytest.approx(math.log(val.value(range(7))), abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_column_generation_matches_exact(seed):
    r = np.random.default_rng(100 + seed)
    inst = random_instance(int(r.integers(2, 4)), int(r.integers(4, 9)), r)
    exact = solve_conflp_exact(inst)
    cg = column_generation_solve(inst)
    check_solution(inst, cg)
    assert cg.lp_value == pytest.approx(exact.lp_value, abs=1e-4)


def test_column_generation_matches_exact_m12():
    r = np.random.default_rng(7)
    inst = random_instance(3, 12, r)
    assert column_generation_solve(inst).lp_value == pytest.approx(solve_conflp_exact(inst).lp_value, abs=1e-4)


def test_column_generation_restricted_assignment():
    p = AdditiveGapParams(4, 2, 10.0, 1e-6)
    inst = gen_additive_gap(p)
    construction = plain_objective(inst, additive_fractional_solution(p))
    sol = column_generation_solve(inst)
    check_solution(inst, sol)
    assert sol.lp_value >= construction - 1e-7


def test_feasibility_residuals_detect_overuse():
    inst = Instance(2, (Agent(0.5, Additive((1, 1))), Agent(0.5, Additive((1, 1)))))
    sol = FractionalSolution([(0, (0, 1), 1.0), (1, (0,), 1.0)], 0.0)
    agent_res, item_res = conflp.feasibility_residuals(inst, sol)
    assert agent_res == 0 and item_res == pytest.approx(1)
    with pytest.raises(ValueError):
        check_solution(inst, sol)
