import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import lp_vertex_oracle, milp_enumeration_oracle, random_lp
from robust_uc.milp import (GE, LE, Cut, LinearProgram, ModelBuilder, audit_big_m,
                            big_m_for_row, read_lp_text, solve_lp, solve_milp, write_lp_text)

BACKENDS = ["native", "highs"]


def knapsack():
    return LinearProgram([5.0, 4.0], [[3.0, 2.0]], [LE], [4.0], [0, 0], [1, 1], [True, True], "max")


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_bound_lp_objective_and_dual(backend):
    lp = LinearProgram([1.0], [[1.0]], [GE], [3.0], [-np.inf], [np.inf], [False])
    rep = solve_lp(lp, backend=backend)
    assert rep.optimal
    assert rep.objective == pytest.approx(3.0, abs=1e-9)
    assert rep.duals[0] == pytest.approx(1.0, abs=1e-9)


def test_degenerate_lp_with_redundant_rows_terminates():
    # many copies of the same facet through the optimum vertex
    A = [[1, 1], [1, 1], [2, 2], [1, 0], [0, 1], [1, 1]]
    lp = LinearProgram([-1.0, -1.0], A, [LE] * 6, [1, 1, 2, 1, 1, 1], [0, 0], [5, 5], [False, False])
    rep = solve_lp(lp, backend="native")
    assert rep.optimal and rep.objective == pytest.approx(-1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_random_lps_match_vertex_enumeration(backend):
    rng = np.random.default_rng(11)
    for _ in range(100):
        lp = random_lp(rng)
        ref = lp_vertex_oracle(lp)
        rep = solve_lp(lp, backend=backend)
        if ref is None:
            assert rep.status == "infeasible"
        else:
            assert rep.optimal
            assert rep.objective == pytest.approx(ref, abs=1e-7)
            assert lp.max_violation(rep.x) <= 1e-7


def test_weak_duality_on_random_lps():
    rng = np.random.default_rng(5)
    for _ in range(60):
        lp = random_lp(rng)
        rep = solve_lp(lp, backend="native")
        if not rep.optimal:
            continue
        # reduced costs give the bound terms; dual objective = y.b + sum of bound multipliers
        sign = 1.0 if lp.sense == "min" else -1.0
        y = rep.duals
        A = lp.A.toarray()
        d = sign * (lp.c - A.T @ y)
        bound_term = np.where(d > 0, d * lp.lb, d * lp.ub)
        dual_obj = sign * (y @ lp.rhs) + bound_term.sum()
        assert dual_obj <= sign * rep.objective + 1e-7 * (1 + abs(rep.objective))
        assert dual_obj == pytest.approx(sign * rep.objective, abs=1e-6 * (1 + abs(rep.objective)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_knapsack(backend):
    rep = solve_milp(knapsack(), backend=backend)
    assert rep.optimal
    assert rep.objective == pytest.approx(5.0)
    assert np.allclose(rep.x, [1, 0])


def test_integral_relaxation_solves_at_root():
    lp = LinearProgram([1.0, 1.0], [[1.0, 1.0]], [GE], [1.0], [0, 0], [1, 1], [True, True])
    rep = solve_milp(lp, backend="native")
    assert rep.optimal and rep.nodes == 1 and rep.objective == pytest.approx(1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_random_milps_match_enumeration(backend):
    rng = np.random.default_rng(23)
    for _ in range(100):
        lp = random_lp(rng, n_max=8, m_max=5, integer=True)
        ref = milp_enumeration_oracle(lp)
        rep = solve_milp(lp, backend=backend)
        if ref is None:
            assert rep.status == "infeasible"
        else:
            assert rep.optimal
            assert rep.objective == pytest.approx(ref, abs=1e-6)
            assert rep.gap <= 1e-6 + 1e-12


def test_node_limit_returns_iteration_limit():
    rng = np.random.default_rng(3)
    n = 12
    w = rng.integers(3, 20, n).astype(float)
    v = rng.integers(3, 20, n).astype(float)
    lp = LinearProgram(v, [w], [LE], [w.sum() / 2 + 0.5], np.zeros(n), np.ones(n),
                       np.ones(n, bool), "max")
    rep = solve_milp(lp, backend="native", node_limit=2)
    assert rep.status == "iteration-limit"


@pytest.mark.parametrize("backend", BACKENDS)
def test_lazy_cuts_are_sound(backend):
    # max x + y over binaries; the callback forbids x = y = 1
    lp = LinearProgram([1.0, 1.0, 0.5], [[0, 0, 1]], [LE], [1], [0, 0, 0], [1, 1, 1],
                       [True, True, True], "max")

    def cb(x):
        if x[0] + x[1] > 1.5:
            return [Cut(np.array([1.0, 1.0, 0.0]), LE, 1.0)]
        return None

    rep = solve_milp(lp, lazy_cuts=cb, backend=backend)
    assert rep.optimal and rep.objective == pytest.approx(1.5)
    assert rep.cuts
    for pt in rep.accepted:
        assert all(c.violation(pt) <= 1e-9 for c in rep.cuts)


def test_big_m_interval_rule():
    assert big_m_for_row((np.array([-10.0]), np.array([10.0])), (np.array([1.0]), 0.0)) == pytest.approx(11.0)
    assert big_m_for_row((np.array([2.0]), np.array([2.0])), (np.array([1.0]), 2.0)) == 1.0
    with pytest.raises(ValueError, match="big-M"):
        big_m_for_row((np.array([0.0]), np.array([np.inf])), (np.array([1.0]), 0.0))
    assert list(audit_big_m([9.5, 1.0], [10.0, 10.0])) == [0]


@pytest.mark.parametrize("make", [knapsack,
                                  lambda: LinearProgram([1.0], [[1.0]], [GE], [3.0], [-np.inf],
                                                        [np.inf], [False]),
                                  lambda: random_lp(np.random.default_rng(1), integer=True)])
def test_lp_text_round_trip(make):
    lp = make()
    text = write_lp_text(lp)
    assert write_lp_text(make()) == text
    back = read_lp_text(text)
    assert write_lp_text(back) == text
    assert np.allclose(back.A.toarray(), lp.A.toarray())
    assert back.sense == lp.sense and np.array_equal(back.integrality, lp.integrality)


def test_builder_blocks():
    mb = ModelBuilder()
    x = mb.add_vars(2, 0, 1, cost=[1.0, 2.0], name="x")
    mb.add_rows(np.eye(2), x, GE, [0.5, 0.25])
    lp = mb.build()
    rep = solve_lp(lp)
    assert rep.objective == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_native_and_highs_agree(seed):
    lp = random_lp(np.random.default_rng(seed))
    a, b = solve_lp(lp, backend="native"), solve_lp(lp, backend="highs")
    assert a.status == b.status
    if a.optimal:
        assert a.objective == pytest.approx(b.objective, abs=1e-7)
