import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from redtruss.model import (
    DamageScenario,
    Design,
    GroundStructure,
    Member,
    ModelError,
    NodalLoad,
    Node,
    apply_scenario,
    builtin_example,
    dump_instance,
    instance_dict,
    instance_from_dict,
    load_instance,
    volume,
)


def _two_bar():
    nodes = (
        Node(0, (0.0, 0.0), True, True),
        Node(1, (0.0, 1000.0), True, True),
        Node(2, (1000.0, 0.0)),
    )
    members = (Member(0, 0, 2), Member(1, 1, 2))
    return GroundStructure(nodes, members, reference_loads=(NodalLoad(2, 0.0, -1000.0),))


def test_columns_are_unit_direction_cosines():
    gs = _two_bar()
    assert gs.n_dof == 2
    np.testing.assert_allclose(gs.lengths, [1000.0, 1000.0 * math.sqrt(2)])
    # tension in a member balances an external load pulling its end away
    np.testing.assert_allclose(gs.columns[:, 0], [1.0, 0.0])
    np.testing.assert_allclose(gs.columns[:, 1], [1 / math.sqrt(2), -1 / math.sqrt(2)])
    np.testing.assert_allclose(np.linalg.norm(gs.columns, axis=0), 1.0)


def test_builtin_example_geometry():
    gs, x0 = builtin_example("I")
    assert gs.n_members == 19
    assert gs.n_dof == 12
    assert volume(x0.areas, gs) == pytest.approx(2.6430e7, rel=1e-4)
    assert x0.volume_budget == pytest.approx(volume(x0.areas, gs))
    assert np.all(x0.areas == 1000.0)


def test_builtin_examples_share_geometry():
    gs1, _ = builtin_example("I")
    gs2, _ = builtin_example("II")
    np.testing.assert_array_equal(gs1.columns, gs2.columns)
    assert not np.any(gs2.dead_load)
    assert gs1.digest() != gs2.digest()


def test_unknown_example():
    with pytest.raises(ModelError):
        builtin_example("III")


def test_bad_ground_structures_rejected():
    n = (Node(0, (0.0, 0.0), True, True), Node(1, (1.0, 0.0)))
    with pytest.raises(ModelError):
        GroundStructure(n, (Member(0, 0, 0),))
    with pytest.raises(ModelError):
        GroundStructure(n, (Member(0, 0, 1), Member(1, 1, 0)))
    with pytest.raises(ModelError):
        GroundStructure(n, (Member(0, 0, 5),))
    with pytest.raises(ModelError):
        GroundStructure(n, (Member(0, 0, 1),), dead_loads=(NodalLoad(0, 1.0, 0.0),))
    with pytest.raises(ModelError):
        GroundStructure(n, (Member(0, 0, 1),), yield_stress=0.0)


def test_design_check():
    gs, x0 = builtin_example("I")
    x0.check(gs)
    with pytest.raises(ModelError):
        Design(x0.areas * 1.01, x0.volume_budget).check(gs)
    bad = x0.areas.copy()
    bad[0] = -1.0
    with pytest.raises(ModelError):
        Design(bad, x0.volume_budget).check(gs)


def test_apply_scenario():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(apply_scenario(x, DamageScenario((1, 3), 4)), [1, 0, 3, 0])
    np.testing.assert_allclose(apply_scenario(x, DamageScenario((0,), 4, 0.25)), [0.25, 2, 3, 4])
    assert DamageScenario.from_indicator([1, 0, 1, 0]).damaged == (1, 3)
    np.testing.assert_array_equal(DamageScenario((2,), 4).t, [1, 1, 0, 1])


def test_scenario_validation():
    with pytest.raises(ModelError):
        DamageScenario((4,), 4)
    with pytest.raises(ModelError):
        DamageScenario((0,), 4, gamma=1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 1e4), min_size=6, max_size=6),
    st.sets(st.integers(0, 5), max_size=6),
    st.floats(0, 0.99),
)
def test_realised_areas_never_exceed_design(areas, damaged, gamma):
    x = np.array(areas)
    z = apply_scenario(x, DamageScenario(tuple(sorted(damaged)), 6, gamma))
    assert np.all(z <= x)
    assert np.all(z >= 0)
    intact = [i for i in range(6) if i not in damaged]
    np.testing.assert_array_equal(z[intact], x[intact])


def test_instance_round_trip(tmp_path):
    gs, x0 = builtin_example("I")
    path = tmp_path / "inst.json"
    dump_instance(gs, x0, path)
    gs2, x2 = load_instance(path)
    assert gs2.digest() == gs.digest()
    np.testing.assert_array_equal(x2.areas, x0.areas)
    assert x2.volume_budget == x0.volume_budget
    np.testing.assert_array_equal(gs2.dead_load, gs.dead_load)
    np.testing.assert_array_equal(gs2.reference_load, gs.reference_load)


def test_instance_errors_name_the_field(tmp_path):
    gs, x0 = builtin_example("II")
    data = instance_dict(gs, x0)
    del data["members"][0]["a"]
    with pytest.raises(ModelError, match="members"):
        instance_from_dict(data)
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1,\n "nodes": [}')
    with pytest.raises(ModelError, match="line 2"):
        load_instance(bad)


def test_schema_version_checked():
    gs, x0 = builtin_example("II")
    data = json.loads(json.dumps(instance_dict(gs, x0)))
    data["schema_version"] = 99
    with pytest.raises(ModelError, match="schema"):
        instance_from_dict(data)
