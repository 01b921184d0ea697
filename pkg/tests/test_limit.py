import numpy as np
import pytest
from scipy.optimize import linprog

from redtruss.limit import LimitStatus, classical_limit_design, limit_load_factor
from redtruss.model import GroundStructure, Member, ModelError, NodalLoad, Node, builtin_example, volume

from oracles import lp_vertex_enumeration

# frozen from the solver and cross-checked against HiGHS below
INTACT_I = 11.577708763999667
INTACT_II = 9.78885438199983
LIMIT_DESIGN_I = 35.23940437898364
LIMIT_DESIGN_II = 17.619702189491818


def _bar(area=100.0, dead=0.0):
    nodes = (Node(0, (0.0, 0.0), True, True), Node(1, (1000.0, 0.0), False, True))
    loads_d = (NodalLoad(1, dead, 0.0),) if dead else ()
    return GroundStructure(nodes, (Member(0, 0, 1),), loads_d, (NodalLoad(1, 10_000.0, 0.0),)), np.array([area])


def _highs_limit(gs, areas):
    m = gs.n_members
    scale = 1e3
    A = np.hstack([-gs.reference_load[:, None] / scale, gs.columns])
    bounds = [(None, None)] + [(-gs.yield_stress * a / scale, gs.yield_stress * a / scale) for a in areas]
    res = linprog(np.r_[-1.0, np.zeros(m)], A_eq=A, b_eq=gs.dead_load / scale, bounds=bounds, method="highs")
    return -res.fun


def test_single_bar():
    gs, x = _bar()
    res = limit_load_factor(gs, x)
    assert res.status is LimitStatus.OPTIMAL
    assert res.load_factor == pytest.approx(2.0)
    assert res.forces[0] == pytest.approx(20_000.0)


def test_single_bar_with_dead_load():
    gs, x = _bar(dead=5_000.0)
    assert limit_load_factor(gs, x).load_factor == pytest.approx(1.5)
    # lambda is sign-free: an undersized bar reports a negative factor
    gs, x = _bar(area=10.0, dead=5_000.0)
    res = limit_load_factor(gs, x)
    assert res.status is LimitStatus.OPTIMAL
    assert res.load_factor == pytest.approx(-0.3)


def test_zero_areas_without_dead_load():
    gs, x0 = builtin_example("II")
    res = limit_load_factor(gs, np.zeros(gs.n_members))
    assert res.status is LimitStatus.OPTIMAL
    assert res.load_factor == 0.0


def test_zero_areas_with_dead_load_is_a_mechanism():
    gs, _ = builtin_example("I")
    assert limit_load_factor(gs, np.zeros(gs.n_members)).status is LimitStatus.MECHANISM_OR_OVERLOAD


def test_bad_areas():
    gs, x0 = builtin_example("I")
    with pytest.raises(ModelError):
        limit_load_factor(gs, x0.areas[:5])
    with pytest.raises(ModelError):
        limit_load_factor(gs, -x0.areas)


@pytest.mark.parametrize("name,expected", [("I", INTACT_I), ("II", INTACT_II)])
def test_intact_regression(name, expected):
    gs, x0 = builtin_example(name)
    res = limit_load_factor(gs, x0.areas)
    assert res.load_factor == pytest.approx(expected, rel=1e-10)
    assert res.load_factor == pytest.approx(_highs_limit(gs, x0.areas), rel=1e-9)


def test_intact_above_single_damage_worst_case():
    gs, x0 = builtin_example("I")
    assert limit_load_factor(gs, x0.areas).load_factor >= 6.7187


def test_equilibrium_and_yield_at_optimum():
    gs, x0 = builtin_example("I")
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(200, 2000, gs.n_members)
        res = limit_load_factor(gs, x)
        lhs = gs.columns @ res.forces
        np.testing.assert_allclose(lhs, res.load_factor * gs.reference_load + gs.dead_load, atol=1e-4)
        assert np.all(np.abs(res.forces) <= gs.yield_stress * x * (1 + 1e-9) + 1e-6)


def _small_truss():
    # four free dofs, five members: small enough for vertex enumeration
    nodes = (
        Node(0, (0.0, 0.0), True, True),
        Node(1, (0.0, 1000.0), True, True),
        Node(2, (1000.0, 0.0)),
        Node(3, (1000.0, 1000.0)),
    )
    members = (Member(0, 0, 2), Member(1, 1, 3), Member(2, 2, 3), Member(3, 0, 3), Member(4, 1, 2))
    return GroundStructure(nodes, members, (NodalLoad(2, 2000.0, 0.0),), (NodalLoad(3, 0.0, -1000.0),))


def test_matches_vertex_enumeration_on_small_truss():
    gs = _small_truss()
    rng = np.random.default_rng(4)
    for _ in range(30):
        x = rng.uniform(5, 50, gs.n_members)
        res = limit_load_factor(gs, x)
        caps = gs.yield_stress * x
        # bound lambda generously so the oracle works with finite boxes
        A = np.hstack([-gs.reference_load[:, None], gs.columns])
        lo = np.r_[-1e3, -caps]
        hi = np.r_[1e3, caps]
        expected = lp_vertex_enumeration(np.r_[1.0, np.zeros(gs.n_members)], A, gs.dead_load, lo, hi)
        assert res.load_factor == pytest.approx(expected, rel=1e-8, abs=1e-8)


def test_monotone_in_areas():
    gs, _ = builtin_example("I")
    rng = np.random.default_rng(12)
    for _ in range(200):
        x = rng.uniform(0, 1500, gs.n_members) * (rng.random(gs.n_members) > 0.2)
        x2 = x + rng.uniform(0, 500, gs.n_members) * (rng.random(gs.n_members) > 0.5)
        assert limit_load_factor(gs, x).load_factor <= limit_load_factor(gs, x2).load_factor + 1e-9


def test_scaling_without_dead_load():
    gs, x0 = builtin_example("II")
    rng = np.random.default_rng(2)
    for kappa in (0.1, 0.5, 3.0, 17.0):
        x = rng.uniform(100, 2000, gs.n_members)
        base = limit_load_factor(gs, x).load_factor
        assert limit_load_factor(gs, kappa * x).load_factor == pytest.approx(kappa * base, rel=1e-9)


def test_limit_design_single_bar():
    gs, _ = _bar()
    V = 1000.0 * 250.0
    ld = classical_limit_design(gs, V)
    assert ld.design.areas[0] == pytest.approx(250.0)
    assert ld.load_factor == pytest.approx(200.0 * 250.0 / 10_000.0)


@pytest.mark.parametrize("name,expected", [("I", LIMIT_DESIGN_I), ("II", LIMIT_DESIGN_II)])
def test_limit_design_regression(name, expected):
    gs, x0 = builtin_example(name)
    ld = classical_limit_design(gs, x0.volume_budget)
    assert ld.load_factor == pytest.approx(expected, rel=1e-9)
    assert volume(ld.design.areas, gs) <= x0.volume_budget * (1 + 1e-9)
    # the design's own limit analysis reproduces lambda*
    assert limit_load_factor(gs, ld.design.areas).load_factor == pytest.approx(expected, rel=1e-7)


def test_limit_design_member_sets():
    gs, x0 = builtin_example("I")
    ld = classical_limit_design(gs, x0.volume_budget)
    kept = ld.surviving()
    assert kept.size == 9
    # member forces are fixed by equilibrium alone
    assert np.linalg.matrix_rank(gs.columns[:, kept]) == kept.size
    gs, x0 = builtin_example("II")
    assert classical_limit_design(gs, x0.volume_budget).surviving().size == 6


def test_limit_design_dominates_random_designs():
    gs, x0 = builtin_example("I")
    lam_star = classical_limit_design(gs, x0.volume_budget).load_factor
    rng = np.random.default_rng(8)
    for _ in range(50):
        x = rng.uniform(0, 1, gs.n_members)
        x *= x0.volume_budget / volume(x, gs)
        assert limit_load_factor(gs, x).load_factor <= lam_star + 1e-9


def test_limit_design_scales_with_budget_without_dead_load():
    gs, x0 = builtin_example("II")
    a = classical_limit_design(gs, x0.volume_budget).load_factor
    b = classical_limit_design(gs, 2 * x0.volume_budget).load_factor
    assert b == pytest.approx(2 * a, rel=1e-9)


def test_limit_design_rejects_bad_budget():
    gs, _ = builtin_example("II")
    with pytest.raises(ModelError):
        classical_limit_design(gs, 0.0)
