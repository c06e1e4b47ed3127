"""Synthetic demonstration episodes with known ground truth.

Two scripted tabletop stories are provided: fetching a small box off a
wall hanger into a basket, and threading a box from a table onto an
empty hanger.  Every run is generated from a seed (start poses and yaws
wobble within a few centimeters and degrees) and from a size variant of
the manipulated box, yet the force-dynamic structure of the episode is
invariant, which is what makes these scripts useful as test oracles.

A teleport glitch can be injected into a generated episode to imitate a
tracking dropout: the carried box jumps to the floor for a fixed number
of samples and back.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange
from .geometry import Transform, quat_from_axis_angle, quat_mul, quat_rotate, slerp
from .model import (DEFAULT_DT, EpisodicMemory, Event, Feature, ObjectInstance,
                    ObjectModel, Taxonomy, TrajectoryStore, Trajectory, WorldModel)

VARIANTS = {
    "O1": (0.060, 0.040, 0.100),
    "O2": (0.075, 0.050, 0.115),
    "O3": (0.050, 0.032, 0.085),
}

PEG_HALF = 0.006          # hanger arm half thickness
HANG_CLEARANCE = 0.004    # box top to arm bottom while hanging
HOLE_LIFT = PEG_HALF + HANG_CLEARANCE  # hole axis height above the box top
BASKET_FLOOR = 0.02       # resting offset above the basket base
HAND_EXT = (0.08, 0.08, 0.08)

_WOBBLE_A = 0.0008        # vertical wiggle amplitude while sliding on the arm
_WOBBLE_F = 12.5          # wiggle frequency, Hz


@dataclass
class ScenarioBundle:
    memory: EpisodicMemory
    ground_truth: dict


def _yaw(angle: float) -> np.ndarray:
    return quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), angle)


def _smoothstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


class _Track:
    """Mutable per-object sample buffer with phase-fill helpers."""

    def __init__(self, n: int, pose: Transform):
        self.pos = np.tile(pose.pos, (n, 1))
        self.quat = np.tile(pose.quat, (n, 1))

    def pose(self, k: int) -> Transform:
        return Transform(self.pos[k], self.quat[k])

    def move(self, k0: int, k1: int, target_pos: np.ndarray,
             target_quat: np.ndarray | None = None, linear: bool = False) -> None:
        """Blend from the pose at k0 to the target over [k0, k1]."""
        p0 = self.pos[k0].copy()
        q0 = self.quat[k0].copy()
        q1 = q0 if target_quat is None else np.asarray(target_quat, float)
        span = np.arange(k0, k1 + 1)
        s = (span - k0) / max(1, k1 - k0)
        if not linear:
            s = _smoothstep(s)
        self.pos[k0:k1 + 1] = p0 + s[:, None] * (np.asarray(target_pos) - p0)
        self.quat[k0:k1 + 1] = slerp(q0, q1, s)
        self.hold_from(k1)

    def hold_from(self, k: int) -> None:
        self.pos[k:] = self.pos[k]
        self.quat[k:] = self.quat[k]

    def wobble_z(self, k0: int, k1: int, dt: float,
                 amp: float = _WOBBLE_A, freq: float = _WOBBLE_F) -> None:
        """Superimpose a small vertical oscillation on [k0, k1]."""
        t = (np.arange(k0, k1 + 1) - k0) * dt
        self.pos[k0:k1 + 1, 2] += amp * np.sin(2.0 * np.pi * freq * t)


def variant_model(variant: str) -> ObjectModel:
    """The manipulated box for a size variant, with its two features."""
    return _salve_model(variant)


def _salve_model(variant: str) -> ObjectModel:
    ext = np.array(VARIANTS[variant])
    hx, hy, hz = ext / 2.0
    rot_z_to_y = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), -np.pi / 2.0)
    rot_z_to_x = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), np.pi / 2.0)
    features = (
        Feature("Hole", "hang_hole",
                Transform(np.array([0.0, 0.0, hz + HOLE_LIFT]), rot_z_to_y),
                {"diameter": 0.024}),
        Feature("GraspPoint", "front_grip",
                Transform(np.array([-hx, 0.0, hz / 2.0]), rot_z_to_x),
                {"width": float(ext[1])}),
    )
    return ObjectModel("HealingSalveBox", ext, features)


def _hanger_instance() -> ObjectInstance:
    rot_z_to_neg_y = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), np.pi / 2.0)
    model = ObjectModel(
        "Hanger", np.array([0.012, 0.30, 0.012]),
        (Feature("Peg", "arm_tip",
                 Transform(np.array([0.0, -0.15, 0.0]), rot_z_to_neg_y),
                 {"length": 0.30, "diameter": 0.012}),))
    return ObjectInstance("hanger", model, Transform(np.array([0.60, 0.0, 1.20])))


def _floor_instance() -> ObjectInstance:
    model = ObjectModel("Floor", np.array([4.0, 4.0, 0.1]))
    return ObjectInstance("floor", model, Transform(np.array([0.0, 0.0, -0.05])))


def _grasp_offset(salve: ObjectModel) -> np.ndarray:
    """Hand center relative to the box frame when palm meets the grip face."""
    grip = salve.feature("GraspPoint")
    return grip.local.pos + np.array([-HAND_EXT[0] / 2.0, 0.0, 0.0])


def _rigid_follow(hand: _Track, salve: _Track, k0: int, k1: int,
                  rel: Transform) -> None:
    """Slave the hand to the box over [k0, k1] with fixed relative pose."""
    for k in range(k0, k1 + 1):
        base = salve.pose(k)
        hand.pos[k] = base.apply(rel.pos)
        hand.quat[k] = quat_mul(base.quat, rel.quat)


def _finish(world: WorldModel, tracks: dict[str, _Track], dt: float,
            events: list[Event], truth: dict) -> ScenarioBundle:
    store = TrajectoryStore(
        {oid: Trajectory(tr.pos, tr.quat) for oid, tr in tracks.items()}, dt=dt)
    for oid, tr in tracks.items():
        world[oid].pose = tr.pose(0)
    memory = EpisodicMemory(world, store, events)
    memory.validate()
    return ScenarioBundle(memory, truth)


def fetch_from_hanger(variant: str = "O1", seed: int = 0,
                      taxonomy: Taxonomy | None = None) -> ScenarioBundle:
    """A hanging box is grasped, slid off the hanger arm, carried over a
    basket, and dropped in."""
    rng = np.random.default_rng([seed, 11])
    dt = DEFAULT_DT
    n = 431
    salve_model = _salve_model(variant)
    hx, hy, hz = salve_model.half

    yaw_s = np.deg2rad(rng.uniform(-10.0, 10.0))
    hang_y = -0.05 + rng.uniform(-0.04, 0.04)
    basket_pos = np.array([rng.uniform(-0.05, 0.05),
                           0.55 + rng.uniform(-0.05, 0.05), 0.10])
    yaw_b = np.deg2rad(rng.uniform(-10.0, 10.0))
    hand_start = np.array([0.15, -0.45, 1.05]) + rng.uniform(-0.05, 0.05, 3)

    world = WorldModel(taxonomy)
    world.add(_floor_instance())
    world.add(_hanger_instance())
    world.add(ObjectInstance(
        "basket", ObjectModel("Basket", np.array([0.30, 0.30, 0.20])),
        Transform(basket_pos, _yaw(yaw_b))))
    hang_pos = np.array([0.60, hang_y, 1.20 - (hz + HOLE_LIFT)])
    world.add(ObjectInstance("salve_box", salve_model,
                             Transform(hang_pos, _yaw(yaw_s))))
    world.add(ObjectInstance(
        "hand", ObjectModel("Hand", np.array(HAND_EXT)),
        Transform(hand_start)))

    salve = _Track(n, world["salve_box"].pose)
    hand = _Track(n, world["hand"].pose)
    static = {oid: _Track(n, world[oid].pose)
              for oid in ("floor", "hanger", "basket")}

    rel = Transform(_grasp_offset(salve_model), np.array([1.0, 0.0, 0.0, 0.0]))
    touch = world["salve_box"].pose.apply(rel.pos)
    touch_quat = world["salve_box"].pose.quat
    back = quat_rotate(touch_quat, np.array([-0.02, 0.0, 0.0]))

    # hand: approach to a pregrasp stop, then a straight final push
    standoff = touch + 5.0 * back + np.array([0.0, 0.0, 0.15])
    hand.move(0, 70, standoff, touch_quat)
    hand.move(70, 85, touch + back)
    hand.move(85, 100, touch, linear=True)

    # box: slide off the arm with a vertical wiggle, carry, settle, drop
    salve.move(150, 210, hang_pos + np.array([0.0, -0.20, 0.0]))
    salve.wobble_z(150, 210, dt)
    drop = np.array([basket_pos[0], basket_pos[1], 0.20 + hz + 0.03])
    salve.move(210, 320, drop)
    k_release = 350
    fall_t = (np.arange(k_release + 1, n) - k_release) * dt
    fall_z = np.maximum(BASKET_FLOOR + hz, drop[2] - 4.9 * fall_t ** 2)
    salve.pos[k_release + 1:, 2] = fall_z

    _rigid_follow(hand, salve, 100, k_release, rel)
    hand.pos[k_release + 1] = hand.pos[k_release] + quat_rotate(
        hand.quat[k_release], np.array([-0.05, 0.0, 0.0])) + np.array([0.0, 0.0, 0.04])
    hand.quat[k_release + 1] = hand.quat[k_release]
    hand.move(k_release + 1, n - 1, np.array([0.10, -0.50, 1.00]),
              np.array([1.0, 0.0, 0.0, 0.0]))

    events = [
        Event(1.00, "phase", {"name": "grasp"}),
        Event(1.50, "phase", {"name": "extract"}),
        Event(2.10, "phase", {"name": "carry"}),
        Event(3.50, "phase", {"name": "release"}),
    ]
    truth = {
        "scenario": "fetch_from_hanger",
        "variant": variant,
        "seed": seed,
        "rigid_span": [1.00, 3.50],
        "expected_actions": 5,
        "expected_candidates": 4,
        "goal_sequence": ["Lifting", "Retracting", "Transporting", "Placing"],
        "manipulated": "salve_box",
    }
    tracks = {"salve_box": salve, "hand": hand, **static}
    return _finish(world, tracks, dt, events, truth)


def thread_onto_hanger(variant: str = "O1", seed: int = 0,
                       taxonomy: Taxonomy | None = None) -> ScenarioBundle:
    """A box is picked off a table, carried to an empty hanger, and slid
    onto the arm until it hangs."""
    rng = np.random.default_rng([seed, 23])
    dt = DEFAULT_DT
    n = 461
    salve_model = _salve_model(variant)
    hx, hy, hz = salve_model.half

    yaw_s = np.deg2rad(rng.uniform(-10.0, 10.0))
    start_xy = np.array([-0.30 + rng.uniform(-0.04, 0.04),
                         0.30 + rng.uniform(-0.04, 0.04)])
    hang_y = -0.05 + rng.uniform(-0.03, 0.03)
    hand_start = np.array([0.15, -0.35, 1.00]) + rng.uniform(-0.05, 0.05, 3)

    world = WorldModel(taxonomy)
    world.add(_floor_instance())
    world.add(_hanger_instance())
    world.add(ObjectInstance(
        "table", ObjectModel("Table", np.array([0.60, 0.44, 0.70])),
        Transform(np.array([-0.35, 0.30, 0.35]))))
    table_top = 0.70
    world.add(ObjectInstance(
        "salve_box", salve_model,
        Transform(np.array([start_xy[0], start_xy[1], table_top + hz]),
                  _yaw(yaw_s))))
    world.add(ObjectInstance(
        "hand", ObjectModel("Hand", np.array(HAND_EXT)),
        Transform(hand_start)))

    salve = _Track(n, world["salve_box"].pose)
    hand = _Track(n, world["hand"].pose)
    static = {oid: _Track(n, world[oid].pose)
              for oid in ("floor", "hanger", "table")}

    rel = Transform(_grasp_offset(salve_model), np.array([1.0, 0.0, 0.0, 0.0]))
    touch = world["salve_box"].pose.apply(rel.pos)
    touch_quat = world["salve_box"].pose.quat
    back = quat_rotate(touch_quat, np.array([-0.02, 0.0, 0.0]))

    standoff = touch + 5.0 * back + np.array([0.0, 0.0, 0.15])
    hand.move(0, 70, standoff, touch_quat)
    hand.move(70, 85, touch + back)
    hand.move(85, 100, touch, linear=True)

    lift = np.array([start_xy[0], start_xy[1], table_top + hz + 0.20])
    salve.move(150, 200, lift)
    hang_z = 1.20 - (hz + HOLE_LIFT)
    prethread = np.array([0.60, -0.21 - (hy - 0.02), hang_z])
    salve.move(200, 330, prethread, np.array([1.0, 0.0, 0.0, 0.0]))
    salve.move(330, 390, np.array([0.60, hang_y, hang_z]))
    salve.wobble_z(330, 390, dt)
    k_release = 420
    salve.hold_from(390)

    _rigid_follow(hand, salve, 100, k_release, rel)
    hand.pos[k_release + 1] = hand.pos[k_release] + quat_rotate(
        hand.quat[k_release], np.array([-0.05, 0.0, 0.0])) + np.array([0.0, 0.0, 0.04])
    hand.quat[k_release + 1] = hand.quat[k_release]
    hand.move(k_release + 1, n - 1, np.array([0.10, -0.50, 1.00]),
              np.array([1.0, 0.0, 0.0, 0.0]))

    events = [
        Event(1.00, "phase", {"name": "grasp"}),
        Event(1.50, "phase", {"name": "lift"}),
        Event(2.00, "phase", {"name": "carry"}),
        Event(3.30, "phase", {"name": "thread"}),
        Event(4.20, "phase", {"name": "release"}),
    ]
    truth = {
        "scenario": "thread_onto_hanger",
        "variant": variant,
        "seed": seed,
        "rigid_span": [1.00, 4.20],
        "expected_actions": 7,
        "expected_candidates": 2,
        "goal_sequence": ["Lifting", "Retracting", "Transporting",
                          "HoleOnPeg", "PuttingDown"],
        "manipulated": "salve_box",
    }
    tracks = {"salve_box": salve, "hand": hand, **static}
    return _finish(world, tracks, dt, events, truth)


SCENARIOS = {
    "fetch_from_hanger": fetch_from_hanger,
    "thread_onto_hanger": thread_onto_hanger,
}


def build(name: str, variant: str = "O1", seed: int = 0,
          taxonomy: Taxonomy | None = None) -> ScenarioBundle:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; have {sorted(SCENARIOS)}")
    if variant not in VARIANTS:
        raise KeyError(f"unknown variant {variant!r}; have {sorted(VARIANTS)}")
    return SCENARIOS[name](variant=variant, seed=seed, taxonomy=taxonomy)


GLITCH_MARGIN = 0.15
GLITCH_SAMPLES = 3


def inject_glitch(bundle: ScenarioBundle, t: float,
                  ground_xy: tuple[float, float] = (0.90, -0.90)) -> ScenarioBundle:
    """Teleport the carried box to the floor for a few samples.

    Imitates a tracker dropout mid-carry.  The time must lie well inside
    the scripted hold span so the dropout interrupts an ongoing grasp.
    """
    t_lo, t_hi = bundle.ground_truth["rigid_span"]
    if not (t_lo + GLITCH_MARGIN <= t <= t_hi - GLITCH_MARGIN):
        raise OutOfRange(
            f"glitch time {t} outside carried span "
            f"[{t_lo + GLITCH_MARGIN}, {t_hi - GLITCH_MARGIN}]")
    memory = bundle.memory
    obj = bundle.ground_truth["manipulated"]
    store = memory.store
    k0 = store.index_at(t)
    hz = memory.world[obj].model.half[2]
    tracks = {}
    for oid, track in store.tracks.items():
        pos = track.positions.copy()
        quat = track.quats.copy()
        if oid == obj:
            pos[k0:k0 + GLITCH_SAMPLES] = np.array(
                [ground_xy[0], ground_xy[1], hz])
            quat[k0:k0 + GLITCH_SAMPLES] = np.array([1.0, 0.0, 0.0, 0.0])
        tracks[oid] = Trajectory(pos, quat)
    new_store = TrajectoryStore(tracks, dt=store.dt, t0=store.t0)
    new_world = copy.deepcopy(memory.world)
    new_memory = EpisodicMemory(new_world, new_store, list(memory.events))
    truth = dict(bundle.ground_truth)
    truth["glitch_time"] = t
    return ScenarioBundle(new_memory, truth)
