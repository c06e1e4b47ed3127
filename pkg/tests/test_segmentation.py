"""Situation detectors on small hand-built episodes.

Each test constructs trajectories where the expected force-dynamic
reading is known by construction, including the counterexamples the
detectors must reject.
"""

import numpy as np
import pytest

from demo2ril.geometry import Transform
from demo2ril.model import (EpisodicMemory, ObjectInstance, ObjectModel,
                            Trajectory, TrajectoryStore, WorldModel)
from demo2ril.segmentation import (SegmentationParams, debounce, segment,
                                   true_runs)

DT = 0.01
IDENT = np.array([1.0, 0.0, 0.0, 0.0])


def steady(pos, n):
    return np.tile(np.asarray(pos, float), (n, 1))


def make_memory(specs, n):
    """specs: oid -> (cls, extents, positions (n,3) or (3,))"""
    world = WorldModel()
    tracks = {}
    for oid, (cls, extents, pos) in specs.items():
        pos = np.asarray(pos, float)
        if pos.ndim == 1:
            pos = steady(pos, n)
        world.add(ObjectInstance(oid, ObjectModel(cls, np.array(extents)),
                                 Transform(pos[0].copy())))
        tracks[oid] = Trajectory(pos, np.tile(IDENT, (n, 1)))
    return EpisodicMemory(world, TrajectoryStore(tracks, dt=DT), [])


def kinds(seg):
    return {(s.kind, s.participants) for s in seg.situations}


# ---------------------------------------------------------------------------
# mask utilities


def test_debounce_drops_short_runs():
    mask = np.array([0, 1, 1, 0, 1, 1, 1, 0, 0, 1, 1, 1, 1], dtype=bool)
    out = debounce(mask, 3)
    assert not out[:4].any()
    assert out[4:7].all()
    assert out[9:].all()


def test_debounce_fills_short_gaps():
    mask = np.array([1, 1, 1, 0, 0, 1, 1, 1], dtype=bool)
    out = debounce(mask, 3)
    assert out.all()


def test_true_runs():
    mask = np.array([0, 1, 1, 0, 0, 1, 1, 1, 0], dtype=bool)
    assert true_runs(mask) == [(1, 2), (5, 7)]


# ---------------------------------------------------------------------------
# detectors


N = 40
HAND_FAR = [2.0, 2.0, 2.0]


def test_resting_box_is_supported():
    mem = make_memory({
        "table": ("Table", [1.0, 1.0, 0.7], [0.0, 0.0, 0.35]),
        "box": ("HealingSalveBox", [0.06, 0.04, 0.1], [0.0, 0.0, 0.75]),
        "hand": ("Hand", [0.08, 0.08, 0.08], HAND_FAR),
    }, N)
    seg = segment(mem)
    got = kinds(seg)
    assert ("Contact", ("box", "table")) in got
    assert ("Support", ("box", "table")) in got
    assert ("Support", ("table", "box")) not in got
    # nothing involves the far-away hand
    assert not any("hand" in s.participants for s in seg.situations)
    # no agent activity: only the trivial endpoints remain
    assert seg.boundaries == [0.0, pytest.approx((N - 1) * DT)]
    assert len(seg.actions) == 1


def test_hanging_box_is_supported_from_above():
    # thin bar, box top 4 mm under it
    mem = make_memory({
        "hanger": ("Hanger", [0.012, 0.3, 0.012], [0.0, 0.0, 1.2]),
        "box": ("HealingSalveBox", [0.06, 0.04, 0.1],
                [0.0, 0.0, 1.2 - 0.006 - 0.004 - 0.05]),
        "hand": ("Hand", [0.08, 0.08, 0.08], HAND_FAR),
    }, N)
    seg = segment(mem)
    got = kinds(seg)
    assert ("Contact", ("box", "hanger")) in got
    assert ("Support", ("box", "hanger")) in got


def test_side_touch_is_contact_without_support():
    # boxes side by side: witness height is at both centers
    mem = make_memory({
        "a": ("HealingSalveBox", [0.1, 0.1, 0.1], [0.0, 0.0, 0.05]),
        "b": ("HealingSalveBox", [0.1, 0.1, 0.1], [0.102, 0.0, 0.05]),
        "hand": ("Hand", [0.08, 0.08, 0.08], HAND_FAR),
    }, N)
    seg = segment(mem)
    got = kinds(seg)
    assert ("Contact", ("a", "b")) in got
    assert not any(k == "Support" for k, _ in got)


def test_vertical_motion_suppresses_support():
    n = 200
    t = np.arange(n) * DT
    pos = steady([0.0, 0.0, 0.75 + 0.0025], n)
    pos[:, 2] += 0.002 * np.sin(2 * np.pi * 10.0 * t)
    mem = make_memory({
        "table": ("Table", [1.0, 1.0, 0.7], [0.0, 0.0, 0.35]),
        "box": ("HealingSalveBox", [0.06, 0.04, 0.1], pos),
        "hand": ("Hand", [0.08, 0.08, 0.08], HAND_FAR),
    }, n)
    seg = segment(mem)
    got = kinds(seg)
    assert ("Contact", ("box", "table")) in got
    assert ("Support", ("box", "table")) not in got


def test_fixtures_never_rest_on_each_other():
    mem = make_memory({
        "floor": ("Floor", [4.0, 4.0, 0.1], [0.0, 0.0, -0.05]),
        "table": ("Table", [1.0, 1.0, 0.7], [0.0, 0.0, 0.35]),
        "hand": ("Hand", [0.08, 0.08, 0.08], HAND_FAR),
    }, N)
    seg = segment(mem)
    got = kinds(seg)
    assert ("Contact", ("floor", "table")) in got
    assert not any(k == "Support" for k, _ in got)


def test_containment_needs_capacity():
    # small box centered inside a roomier one: contained one way only
    mem = make_memory({
        "basket": ("Basket", [0.3, 0.3, 0.2], [0.0, 0.0, 0.1]),
        "box": ("HealingSalveBox", [0.06, 0.04, 0.1], [0.0, 0.0, 0.07]),
        "hand": ("Hand", [0.08, 0.08, 0.08], HAND_FAR),
    }, N)
    seg = segment(mem)
    got = kinds(seg)
    assert ("Containment", ("box", "basket")) in got
    assert ("Containment", ("basket", "box")) not in got
    # a body does not rest on what it sits inside of
    assert ("Support", ("box", "basket")) not in got


def test_grasp_requires_steady_hold():
    n = 120
    k_touch = 40
    hand = steady([2.0, 0.0, 0.8], n)
    hand[k_touch:] = [0.07 + 0.002, 0.0, 0.8]
    mem = make_memory({
        "box": ("HealingSalveBox", [0.06, 0.04, 0.1], [0.0, 0.0, 0.8]),
        "hand": ("Hand", [0.08, 0.08, 0.08], hand),
    }, n)
    seg = segment(mem)
    got = kinds(seg)
    assert ("Grasp", ("box", "hand")) in got
    g = next(s for s in seg.situations if s.kind == "Grasp")
    assert g.t_start == pytest.approx(k_touch * DT, abs=5 * DT)
    # the hold creates interior boundaries
    assert len(seg.actions) >= 2


def test_too_short_hold_is_not_a_grasp():
    n = 60
    hand = steady([2.0, 0.0, 0.8], n)
    hand[30:36] = [0.072, 0.0, 0.8]  # 6 samples < hold time
    mem = make_memory({
        "box": ("HealingSalveBox", [0.06, 0.04, 0.1], [0.0, 0.0, 0.8]),
        "hand": ("Hand", [0.08, 0.08, 0.08], hand),
    }, n)
    seg = segment(mem)
    assert not any(s.kind == "Grasp" for s in seg.situations)


def test_slipping_hand_is_not_a_grasp():
    n = 120
    hand = steady([0.072, 0.0, 0.8], n)
    hand[:, 1] = np.arange(n) * 0.007  # 7 mm per sample drift
    mem = make_memory({
        "box": ("HealingSalveBox", [0.06, 0.3, 0.1], [0.0, 0.4, 0.8]),
        "hand": ("Hand", [0.08, 0.08, 0.08], hand),
    }, n)
    seg = segment(mem)
    assert not any(s.kind == "Grasp" for s in seg.situations)


def test_fixture_cannot_be_grasped():
    mem = make_memory({
        "table": ("Table", [1.0, 1.0, 0.7], [0.0, 0.0, 0.35]),
        "hand": ("Hand", [0.08, 0.08, 0.08], [0.0, 0.0, 0.74 + 0.002]),
    }, N)
    seg = segment(mem)
    assert not any(s.kind == "Grasp" for s in seg.situations)


def test_contact_band_tolerance():
    params = SegmentationParams()
    # 4 mm clearance: inside the band; 7 mm: outside
    for gap, expect in ((0.004, True), (0.007, False)):
        mem = make_memory({
            "a": ("HealingSalveBox", [0.1, 0.1, 0.1], [0.0, 0.0, 0.05]),
            "b": ("HealingSalveBox", [0.1, 0.1, 0.1],
                  [0.1 + gap, 0.0, 0.05]),
            "hand": ("Hand", [0.08, 0.08, 0.08], HAND_FAR),
        }, N)
        seg = segment(mem, params)
        has = ("Contact", ("a", "b")) in kinds(seg)
        assert has == expect, f"gap={gap}"


def test_boundaries_frame_grasped_motion():
    n = 200
    box = steady([0.0, 0.0, 0.75], n)
    hand = steady([0.072, 0.0, 0.75], n)
    # hold still, carry between samples 80 and 140, hold still again
    lift = np.zeros(n)
    ramp = np.linspace(0.0, 0.3, 61)
    lift[80:141] = ramp
    lift[141:] = 0.3
    box[:, 2] += lift
    hand[:, 2] += lift
    mem = make_memory({
        "table": ("Table", [1.0, 1.0, 0.7], [0.0, 0.0, 0.35]),
        "box": ("HealingSalveBox", [0.06, 0.04, 0.1], box),
        "hand": ("Hand", [0.08, 0.08, 0.08], hand),
    }, n)
    seg = segment(mem)
    got = kinds(seg)
    assert ("Grasp", ("box", "hand")) in got
    assert ("Support", ("box", "table")) in got
    sup = next(s for s in seg.situations if s.kind == "Support")
    # support ends once the carry starts
    assert sup.t_end == pytest.approx(0.80, abs=0.06)
    assert any(abs(b - sup.t_end) < 1e-9 for b in seg.boundaries)
