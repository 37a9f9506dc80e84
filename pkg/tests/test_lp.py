import numpy as np
import pytest
from hypothesis import given, strategies as st

from nswkit.lp import CertificationError, LinearProgram, Row, certified_upper_bound, dual_objective, solve_lp

INFL = 1e-9


def _lp(c, A, senses, b, **kw):
    return LinearProgram.from_matrix(np.asarray(c, float), np.asarray(A, float), senses, np.asarray(b, float), **kw)


def test_single_bound():
    lp = _lp([1], [[1]], ["<="], [3])
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3)
    ub = certified_upper_bound(lp)
    assert 3 <= ub <= 3 + INFL * (1 + 3) + 1e-12


def test_simplex_dual_is_one():
    sol = solve_lp(_lp([1, 1], [[1, 1]], ["<="], [1]))
    assert sol.objective == pytest.approx(1)
    assert sol.dual[0] == pytest.approx(1)


def test_two_constraint_vertex():
    # vertices: (0,0)=0, (4,0)=8, (0,2.5)=7.5, (3,1)=9
    sol = solve_lp(_lp([2, 3], [[1, 1], [1, 2]], ["<=", "<="], [4, 5]))
    assert sol.objective == pytest.approx(9)
    np.testing.assert_allclose(sol.primal, [3, 1], atol=1e-9)


def test_equality_and_ge_rows():
    # max x + y s.t. x - y = 0, x >= 0.25, x + y <= 1
    lp = _lp([1, 1], [[1, -1], [1, 0], [1, 1]], ["=", ">=", "<="], [0, 0.25, 1])
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(1)
    assert dual_objective(lp, sol.dual) == pytest.approx(1)
    assert certified_upper_bound(lp) >= 1


def test_infeasible_and_unbounded():
    assert solve_lp(_lp([1], [[1], [1]], [">=", "<="], [2, 1])).status == "infeasible"
    assert solve_lp(_lp([1], [[-1]], ["<="], [0])).status == "unbounded"


def test_bad_dual_rejected():
    lp = _lp([1, 1], [[1, 1]], ["<="], [1])
    with pytest.raises(CertificationError):
        certified_upper_bound(lp, dual=np.array([-0.5]))  # wrong sign
    with pytest.raises(CertificationError):
        certified_upper_bound(lp, dual=np.array([0.5]))  # reduced cost positive on unbounded column
    with pytest.raises(CertificationError):
        certified_upper_bound(lp, dual=np.array([np.nan]))


def test_bad_relation():
    with pytest.raises(ValueError):
        LinearProgram(np.ones(1), [Row(np.ones(1), "<", 1.0)])


def test_box_bounds_enter_the_certificate():
    # max x with 0 <= x <= 2 and a loose row; any dual y >= 0 still certifies
    lp = _lp([1], [[1]], ["<="], [10], ub=np.array([2.0]))
    assert certified_upper_bound(lp, dual=np.array([0.0])) == pytest.approx(2, abs=1e-6)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_random_packing_weak_duality(seed, n, m):
    r = np.random.default_rng(seed)
    A = r.random((m, n)) + 0.05
    b = r.random(m) + 0.5
    c = r.random(n) - 0.2
    lp = _lp(c, A, ["<="] * m, b)
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    ub = certified_upper_bound(lp)
    assert ub >= sol.objective - 1e-9
    assert ub <= sol.objective + 1e-6
    # any feasible point stays below the certificate
    x = r.random(n)
    x *= min(1.0, float(np.min(b / (A @ x))))
    assert c @ x <= ub + 1e-12
