"""World model, taxonomy, and episode container behavior."""

import numpy as np
import pytest

from demo2ril.errors import OutOfRange, TaxonomyError
from demo2ril.geometry import Transform, quat_from_axis_angle
from demo2ril.model import (DEFAULT_DT, EpisodicMemory, Event, Feature,
                            ObjectInstance, ObjectModel, Situation,
                            Taxonomy, Trajectory, TrajectoryStore, WorldModel)


def box(extents):
    return ObjectModel("HealingSalveBox", np.array(extents, float))


def make_world():
    w = WorldModel()
    w.add(ObjectInstance("table", ObjectModel("Table", np.array([1.0, 1.0, 0.7])),
                         Transform(np.array([0.0, 0.0, 0.35]))))
    w.add(ObjectInstance("item", box([0.06, 0.04, 0.1]),
                         Transform(np.array([0.0, 0.0, 0.75]))))
    w.add(ObjectInstance("hand", ObjectModel("Hand", np.array([0.08, 0.08, 0.08])),
                         Transform(np.array([0.4, 0.0, 1.0]))))
    return w


def test_taxonomy_subsumption():
    t = Taxonomy.default()
    assert t.is_a("HealingSalveBox", "Item")
    assert t.is_a("HealingSalveBox", "PhysicalObject")
    assert t.is_a("Hanger", "Fixture")
    assert t.is_a("Basket", "Container")
    assert not t.is_a("Basket", "Fixture")
    assert t.is_a("Hand", "Agent")
    assert t.is_a("Lifting", "Manipulating")
    assert "HealingSalveBox" in t.descendants("PhysicalObject")
    # reflexive
    assert t.is_a("Table", "Table")


def test_taxonomy_rejects_unknown():
    t = Taxonomy.default()
    with pytest.raises(TaxonomyError):
        t.check("Zeppelin")
    assert "Zeppelin" not in t


def test_world_queries():
    w = make_world()
    assert w.ids() == ["hand", "item", "table"]
    assert w.of_class("Item") == ["item"]
    assert set(w.of_class("PhysicalObject")) == {"hand", "item", "table"}
    assert w.agent_id() == "hand"
    assert w.is_fixed("table") and not w.is_fixed("item")


def test_world_round_trip():
    w = make_world()
    again = WorldModel.from_dict(w.to_dict())
    assert again.ids() == w.ids()
    for oid in w.ids():
        assert np.allclose(again[oid].pose.pos, w[oid].pose.pos)
        assert again[oid].model.cls == w[oid].model.cls
        assert np.allclose(again[oid].model.extents, w[oid].model.extents)


def test_max_penetration_reports_overlap():
    w = WorldModel()
    w.add(ObjectInstance("a", box([0.2, 0.2, 0.2]), Transform(np.zeros(3))))
    w.add(ObjectInstance("b", box([0.2, 0.2, 0.2]),
                         Transform(np.array([0.15, 0.0, 0.0]))))
    assert w.max_penetration() == pytest.approx(0.05)


def test_feature_pose_composition():
    feat = Feature("Hole", "h", Transform(
        np.array([0.0, 0.0, 0.06]),
        quat_from_axis_angle(np.array([1.0, 0, 0]), -np.pi / 2)))
    model = ObjectModel("HealingSalveBox", np.array([0.06, 0.04, 0.1]), (feat,))
    inst = ObjectInstance("x", model, Transform(
        np.array([1.0, 2.0, 3.0]),
        quat_from_axis_angle(np.array([0.0, 0, 1.0]), np.pi / 2)))
    fp = inst.feature_pose(feat)
    assert np.allclose(fp.pos, [1.0, 2.0, 3.06])
    # local +z of the feature maps to world -x after the yaw
    from demo2ril.geometry import quat_rotate
    axis = quat_rotate(fp.quat, np.array([0.0, 0.0, 1.0]))
    assert np.allclose(axis, [-1.0, 0.0, 0.0], atol=1e-12)


def test_trajectory_store_indexing():
    n = 11
    pos = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    quat = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
    store = TrajectoryStore({"a": Trajectory(pos, quat)})
    assert store.n_samples == n
    assert store.t_end == pytest.approx((n - 1) * DEFAULT_DT)
    assert store.index_at(0.05) == 5
    assert store.index_at(1e9, clamp=True) == n - 1
    with pytest.raises(OutOfRange):
        store.index_at(1.0)
    with pytest.raises(OutOfRange):
        store.index_at(-0.02)
    p = store.pose_at("a", 0.04)
    assert np.allclose(p.pos, [0.0, 0.0, 1.0])


def test_memory_save_load_round_trip(tmp_path):
    w = make_world()
    n = 6
    tracks = {}
    for oid in w.ids():
        pos = np.tile(w[oid].pose.pos, (n, 1))
        quat = np.tile(w[oid].pose.quat, (n, 1))
        tracks[oid] = Trajectory(pos, quat)
    mem = EpisodicMemory(w, TrajectoryStore(tracks),
                         [Event(0.02, "note", {"k": 1})])
    mem.validate()
    mem.save(tmp_path)
    back = EpisodicMemory.load(tmp_path)
    assert back.world.ids() == w.ids()
    assert back.store.n_samples == n
    assert back.events[0].kind == "note"
    assert np.allclose(back.store.pose_at("item", 0.03).pos,
                       w["item"].pose.pos)


def test_validate_rejects_deep_interpenetration():
    w = WorldModel()
    w.add(ObjectInstance("a", box([0.2, 0.2, 0.2]), Transform(np.zeros(3))))
    w.add(ObjectInstance("b", box([0.2, 0.2, 0.2]),
                         Transform(np.array([0.1, 0.0, 0.0]))))
    n = 3
    tracks = {oid: Trajectory(np.tile(w[oid].pose.pos, (n, 1)),
                              np.tile(w[oid].pose.quat, (n, 1)))
              for oid in w.ids()}
    mem = EpisodicMemory(w, TrajectoryStore(tracks), [])
    with pytest.raises(ValueError):
        mem.validate()


def test_situation_interval_and_order():
    s = Situation("Contact", ("a", "b"), 0.5, 1.5)
    assert s.active_at(0.5) and s.active_at(1.5) and not s.active_at(1.51)
    assert s.involves("a") and not s.involves("c")
    with pytest.raises(ValueError):
        Situation("Friction", ("a", "b"), 0.0, 1.0)
