import numpy as np
import pytest

from redtruss.lp import LpError, LpProblem, LpStatus, dump_lp, solve_lp

from oracles import lp_vertex_enumeration


def test_simple_optimal():
    sol = solve_lp(LpProblem.build([1, 1], [[1, 1]], [1], [0, 0], [1, 1]))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(1.0)


def test_unbounded_without_constraints():
    sol = solve_lp(LpProblem.build([1.0], np.zeros((0, 1)), [], [-np.inf], [np.inf]))
    assert sol.status is LpStatus.UNBOUNDED


def test_infeasible_fixed_value_against_bound():
    sol = solve_lp(LpProblem.build([0.0], [[1.0]], [1.0], [-np.inf], [0.0]))
    assert sol.status is LpStatus.INFEASIBLE


def test_dimension_mismatch_raises():
    with pytest.raises(LpError):
        solve_lp(LpProblem(np.ones(2), np.ones((1, 3)), np.ones(1), np.zeros(2), np.ones(2)))


def test_free_variables_and_duals():
    # max y0 + 2 y1  s.t. y0 + y1 = 3, y0 - y1 free-ish, y1 <= 2
    sol = solve_lp(LpProblem.build([1, 2], [[1, 1]], [3], [-np.inf, -np.inf], [np.inf, 2]))
    assert sol.status is LpStatus.OPTIMAL
    np.testing.assert_allclose(sol.x, [1, 2], atol=1e-12)
    assert sol.duals[0] == pytest.approx(1.0)
    # y1 at its upper bound with positive reduced cost
    assert sol.reduced_costs[1] == pytest.approx(1.0)


def _random_instance(rng):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, n))
    A = rng.normal(size=(m, n))
    if rng.random() < 0.3:
        A[:, 0] = 0.0  # degenerate column
    lo = rng.uniform(-2, 0, n)
    hi = lo + rng.uniform(0, 3, n)
    if rng.random() < 0.2:
        hi[0] = lo[0]  # fixed variable
    y0 = rng.uniform(lo, hi)
    b = A @ y0
    c = rng.normal(size=n)
    return c, A, b, lo, hi


def test_matches_vertex_enumeration_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(500):
        c, A, b, lo, hi = _random_instance(rng)
        sol = solve_lp(LpProblem(c, A, b, lo, hi))
        expected = lp_vertex_enumeration(c, A, b, lo, hi)
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == pytest.approx(expected, rel=1e-8, abs=1e-8)


def test_complementary_slackness():
    rng = np.random.default_rng(11)
    for _ in range(200):
        c, A, b, lo, hi = _random_instance(rng)
        sol = solve_lp(LpProblem(c, A, b, lo, hi))
        red = sol.reduced_costs
        tol = 1e-7
        at_lo = np.isclose(sol.x, lo, atol=1e-9)
        at_hi = np.isclose(sol.x, hi, atol=1e-9)
        interior = ~at_lo & ~at_hi
        assert np.all(np.abs(red[interior]) <= tol)
        assert np.all(red[at_lo & ~at_hi] <= tol)
        assert np.all(red[at_hi & ~at_lo] >= -tol)
        # strong duality: c^T y = b^T pi + sum of reduced cost times bound
        assert c @ sol.x == pytest.approx(b @ sol.duals + red @ sol.x, abs=1e-8)


def test_permuted_variables_same_objective():
    rng = np.random.default_rng(3)
    for _ in range(100):
        c, A, b, lo, hi = _random_instance(rng)
        perm = rng.permutation(c.size)
        a = solve_lp(LpProblem(c, A, b, lo, hi)).objective
        p = solve_lp(LpProblem(c[perm], A[:, perm], b, lo[perm], hi[perm])).objective
        assert p == pytest.approx(a, rel=1e-10, abs=1e-10)


def test_infeasible_random_instances_detected():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = 4
        A = rng.normal(size=(2, n))
        lo, hi = np.zeros(n), np.ones(n)
        # right-hand side far outside the reachable box image
        b = A @ np.ones(n) * 0 + np.abs(A).sum(axis=1) * 3 + 1
        assert solve_lp(LpProblem(rng.normal(size=n), A, b, lo, hi)).status is LpStatus.INFEASIBLE


def test_deterministic():
    rng = np.random.default_rng(1)
    c, A, b, lo, hi = _random_instance(rng)
    s1 = solve_lp(LpProblem(c, A, b, lo, hi))
    s2 = solve_lp(LpProblem(c, A, b, lo, hi))
    assert s1.x.tobytes() == s2.x.tobytes()


def test_degenerate_cycling_example():
    # Beale's classic cycling example (as a max problem in equality form)
    c = np.array([0.75, -150, 0.02, -6, 0, 0, 0])
    A = np.array([
        [0.25, -60, -0.04, 9, 1, 0, 0],
        [0.5, -90, -0.02, 3, 0, 1, 0],
        [0, 0, 1, 0, 0, 0, 1],
    ])
    b = np.array([0, 0, 1.0])
    sol = solve_lp(LpProblem(c, A, b, np.zeros(7), np.full(7, np.inf)))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(0.05)


def test_dump_format(tmp_path):
    p = LpProblem.build([1, 2], [[1, 1]], [3], [0, 0], [np.inf, 2])
    path = tmp_path / "lp.txt"
    dump_lp(p, path)
    text = path.read_text().splitlines()
    assert text[1] == "OBJECTIVE"
    assert text[-1] == "2.0 2.0" or text[-1].endswith("2.0")
    assert "inf" in path.read_text()
