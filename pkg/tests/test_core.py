import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nswkit.core import (Additive, Agent, Coverage, Instance, Table, brute_force_opt, evaluate, instance_from_dict,
                         instance_to_dict, load_instance, log_nsw, random_instance, save_instance, validate_instance,
                         value_table)
from nswkit.gapgen import gen_square_instance


def test_additive_value():
    assert evaluate(Additive((1, 2, 3)), {0, 2}) == 4
    assert evaluate(Additive((1, 2, 3)), {0, 1}) == 3


def test_empty_set_is_zero(rng):
    for val in (Additive((1, 2, 3)), Coverage(3, ((0, 1), (1, 2), (2,))), random_instance(1, 5, rng).agents[0].valuation):
        assert evaluate(val, []) == 0


def test_coverage_union():
    assert evaluate(Coverage(3, ((0, 1), (1, 2))), {0, 1}) == 3


def test_out_of_range_item_rejected():
    with pytest.raises(IndexError):
        evaluate(Additive((1, 2)), [5])


def test_log_nsw_geometric_mean():
    inst = Instance(2, (Agent(0.5, Additive((4, 0))), Agent(0.5, Additive((0, 1)))))
    assert log_nsw(inst, [[0], [1]]) == pytest.approx(math.log(2))


def test_log_nsw_zero_bundle_and_overlap():
    inst = Instance(2, (Agent(0.5, Additive((1, 1))), Agent(0.5, Additive((1, 1)))))
    assert log_nsw(inst, [[0, 1], []]) == -math.inf
    with pytest.raises(ValueError):
        log_nsw(inst, [[0], [0]])


def test_unit_bundles_give_zero():
    inst = Instance(2, (Agent(0.3, Additive((1, 0))), Agent(0.7, Additive((0, 1)))))
    assert log_nsw(inst, [[0], [1]]) == 0


def test_brute_force_single_agent():
    inst = Instance(3, (Agent(1.0, Coverage(4, ((0,), (1,), (2, 3)))),))
    alloc, val = brute_force_opt(inst)
    assert sorted(alloc[0]) == [0, 1, 2]
    assert val == pytest.approx(math.log(4))


def test_brute_force_symmetric_additive():
    inst = Instance(2, (Agent(0.5, Additive((1, 1))), Agent(0.5, Additive((1, 1)))))
    alloc, val = brute_force_opt(inst)
    assert sorted(len(b) for b in alloc) == [1, 1]
    assert val == pytest.approx(0.0, abs=1e-12)


def test_brute_force_square():
    inst = gen_square_instance(5.0)
    alloc, val = brute_force_opt(inst)
    assert val == pytest.approx(math.log(2 * 5 * 6) / 4, abs=1e-9)
    assert log_nsw(inst, alloc) == pytest.approx(val, abs=1e-12)


def test_brute_force_threads_agree(rng):
    inst = random_instance(3, 7, rng)
    a1, v1 = brute_force_opt(inst, threads=1, chunk=97)
    a2, v2 = brute_force_opt(inst, threads=3, chunk=97)
    assert v1 == v2 and a1 == a2


def test_validate_weights():
    ok = Instance(1, (Agent(0.5, Additive((1,))), Agent(0.5, Additive((1,)))))
    assert validate_instance(ok) == []
    bad = Instance(1, (Agent(0.5, Additive((1,))), Agent(0.6, Additive((1,)))))
    assert any(v.predicate == "weights sum to 1" for v in validate_instance(bad))


def test_validate_monotonicity():
    tab = Table(np.array([0.0, 2.0, 1.0, 1.5]))  # v({1}) > v({0,1})
    found = validate_instance(Instance(2, (Agent(1.0, tab),)))
    assert any("monoton" in v.predicate for v in found)


def test_json_round_trip(tmp_path, rng):
    inst = random_instance(3, 5, rng)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert instance_to_dict(back) == instance_to_dict(inst)
    assert instance_from_dict(instance_to_dict(inst)).num_agents == 3


@given(st.integers(1, 8), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_coverage_is_monotone_submodular(m, g, seed):
    inst = random_instance(1, m, np.random.default_rng(seed), ground_size=g)
    tab = value_table(inst.agents[0].valuation)
    masks = np.arange(1 << m)
    for j in range(m):
        bit = 1 << j
        without = masks[(masks & bit) == 0]
        gain = tab[without | bit] - tab[without]
        assert gain.min() >= 0
        for jj in range(m):
            if jj == j:
                continue
            w = without[(without & (1 << jj)) == 0]
            assert np.all(tab[w | bit] - tab[w] >= tab[w | bit | (1 << jj)] - tab[w | (1 << jj)] - 1e-12)


@given(st.integers(0, 2**32 - 1))
def test_brute_force_dominates_random_allocations(seed):
    r = np.random.default_rng(seed)
    inst = random_instance(2, 5, r)
    _, best = brute_force_opt(inst)
    for _ in range(10):
        owner = r.integers(0, 2, size=5)
        alloc = [np.nonzero(owner == i)[0].tolist() for i in range(2)]
        assert log_nsw(inst, alloc) <= best + 1e-12
