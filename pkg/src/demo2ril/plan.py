"""Refinement of task readings into executable robot programs.

Each candidate reading is a sequence of (task, bindings) steps over the
demonstration objects.  Refinement replays that sequence against an
execution world: symbolic slots are resolved to concrete objects, task
recipes expand into motion primitives, and every free-space move is
checked for collisions along the swept path.  The result is a typed
instruction program plus per-step bookkeeping that a simulator can
check against task postconditions.

Containers are treated as open: their solid box stands in for the
outer hull in contact reasoning, but motion planning and simulation
let bodies pass into them.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .codegen import Grip, Instruction, MoveC, MoveL, PushF, Spiral
from .errors import NoMatch, PlanningFailure, Unreachable
from .geometry import Transform, quat_conj, quat_rotate, sat_gap, slerp
from .interpreter import Step
from .model import (EpisodicMemory, Feature, ObjectInstance, ObjectModel,
                    WorldModel)

SPEED_FREE = 0.25
SPEED_FINE = 0.05
CONTACT_FORCE_LIMIT = 15.0
PUSH_FORCE = 25.0
SPIRAL_RADIUS = 0.008
SPIRAL_PITCH = 0.002
CONTACT_EPS = 0.005
GRAZE_TOL = 0.002
GRASP_BACKOFF = 0.10
PLACE_DROP = 0.03
CONTAINER_FLOOR = 0.02
REACH_CENTER = np.array([0.2, 0.0, 0.8])
REACH_RADIUS = 1.6
SUPPORT_MARGIN_RATIO = 0.2
HANG_GAP_GUESS = 0.004  # expected radial clearance when a hole meets its peg

GRIPPER_ID = "gripper"


def load_designators() -> dict:
    text = resources.files("demo2ril").joinpath("data/designators.json").read_text()
    return json.loads(text)


def execution_world(memory: EpisodicMemory) -> WorldModel:
    """The robot's world: the demo scene with the hand swapped for a gripper."""
    world = WorldModel(memory.world.taxonomy)
    hand = memory.world.agent_id()
    t0 = memory.store.t0
    for oid in memory.world.ids():
        inst = memory.world[oid]
        pose = memory.store.pose_at(oid, t0)
        if oid == hand:
            model = ObjectModel("Gripper", inst.model.extents.copy(),
                                inst.model.features)
            world.add(ObjectInstance(GRIPPER_ID, model, pose))
        else:
            world.add(ObjectInstance(oid, inst.model, pose))
    return world


def demo_to_exec_map(memory: EpisodicMemory) -> dict[str, str]:
    hand = memory.world.agent_id()
    return {oid: (GRIPPER_ID if oid == hand else oid)
            for oid in memory.world.ids()}


def resolve_object(world: WorldModel, cls_name: str,
                   near: np.ndarray | None = None) -> str:
    """Pick the instance of a class nearest a reference point.

    Ties within a millimeter fall back to lexicographic id order so
    resolution is deterministic.
    """
    ids = world.of_class(cls_name)
    if not ids:
        raise NoMatch(f"no instance of class {cls_name!r} in the world")
    anchor = REACH_CENTER if near is None else np.asarray(near, float)
    scored = sorted(
        ids, key=lambda i: (round(float(
            np.linalg.norm(world[i].pose.pos - anchor)), 3), i))
    return scored[0]


def is_container(world: WorldModel, oid: str) -> bool:
    return world.taxonomy.is_a(world[oid].model.cls, "Container")


# ---------------------------------------------------------------------------
# static world reasoning shared with the simulator


def static_contacts(world: WorldModel, eps: float = CONTACT_EPS
                    ) -> dict[tuple[str, str], float]:
    """Pairwise separation for every pair at rest; contact iff gap <= eps."""
    from .geometry import obb_distance
    out = {}
    ids = world.ids()
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            dist, _, _ = obb_distance(world[a].obb(), world[b].obb())
            if dist <= eps:
                out[(a, b)] = dist
    return out


def _witness_z(world: WorldModel, a: str, b: str) -> float:
    from .geometry import obb_distance
    _, pa, pb = obb_distance(world[a].obb(), world[b].obb())
    return 0.5 * (pa[2] + pb[2])


def static_atoms(world: WorldModel, agent: str,
                 attached: str | None = None) -> frozenset:
    """Situation atoms derivable from a single world state.

    Mirrors the episode detectors with all motion terms at rest: the
    agent participates in contact only, support needs a bearing witness
    clearly above or below the carried body's center, containment needs
    the contained center inside a strictly roomier body, and holding is
    whatever the gripper is attached to.
    """
    atoms = set()
    contacts = static_contacts(world)
    for (a, b) in contacts:
        atoms.add(("Contact", (a, b)))
    contained = set()
    for (a, b) in list(contacts):
        for x, y in ((a, b), (b, a)):
            if agent in (x, y):
                continue
            hx = world[x].model.half
            hy = world[y].model.half
            if np.linalg.norm(hx) >= np.linalg.norm(hy):
                continue
            rel = world[x].pose.pos - world[y].pose.pos
            local = quat_rotate(quat_conj(world[y].pose.quat), rel)
            if np.all(np.abs(local) <= hy):
                contained.add((x, y))
                atoms.add(("Containment", (x, y)))
    for (a, b) in list(contacts):
        for x, y in ((a, b), (b, a)):
            if agent in (x, y) or world.is_fixed(x):
                continue
            if (x, y) in contained or (y, x) in contained:
                continue
            wz = _witness_z(world, x, y)
            lo, hi = world[x].obb().aabb()
            margin = SUPPORT_MARGIN_RATIO * 0.5 * (hi[2] - lo[2])
            cz = world[x].pose.pos[2]
            if wz <= cz - margin or wz >= cz + margin:
                atoms.add(("Support", (x, y)))
    if attached is not None:
        atoms.add(("Grasp", (attached,)))
    return frozenset(atoms)


def settle_pose(world: WorldModel, oid: str, agent: str) -> Transform:
    """Where a just-released body comes to rest.

    A body statically borne by something other than the agent or a
    container stays put (this covers hanging).  Otherwise it falls
    straight down to the highest landing: a container interior when its
    center is over one, else the highest top face under its footprint.
    """
    pose = world[oid].pose
    atoms = static_atoms(world, agent)
    for kind, args in atoms:
        if kind == "Support" and args[0] == oid and \
                args[1] != agent and not is_container(world, args[1]):
            return pose
    lo, hi = world[oid].obb().aabb()
    hz = 0.5 * (hi[2] - lo[2])
    best = None
    for other in world.ids():
        if other in (oid, agent):
            continue
        olo, ohi = world[other].obb().aabb()
        if is_container(world, other):
            center = world[other].pose.pos
            half_xy = 0.8 * 0.5 * (ohi[:2] - olo[:2])
            if np.all(np.abs(pose.pos[:2] - center[:2]) <= half_xy) and \
                    pose.pos[2] > olo[2]:
                z = olo[2] + CONTAINER_FLOOR + hz
                if z <= pose.pos[2] + 1e-9 and (best is None or z > best):
                    best = z
        else:
            if np.all(lo[:2] <= ohi[:2]) and np.all(olo[:2] <= hi[:2]):
                z = ohi[2] + hz
                if z <= pose.pos[2] + 1e-9 and (best is None or z > best):
                    best = z
    if best is None:
        return pose
    return Transform(np.array([pose.pos[0], pose.pos[1], best]), pose.quat)


# ---------------------------------------------------------------------------
# belief state and collision checking


@dataclass
class _Belief:
    world: WorldModel
    attached: str | None = None
    rel: Transform | None = None  # object pose = gripper pose o rel

    @property
    def gripper(self) -> Transform:
        return self.world[GRIPPER_ID].pose

    def set_gripper(self, pose: Transform) -> None:
        self.world[GRIPPER_ID].pose = pose
        if self.attached is not None:
            self.world[self.attached].pose = pose.compose(self.rel)


def _swept(p0: Transform, p1: Transform,
           step: float = 0.01, astep: float = math.radians(5)) -> list[Transform]:
    dist = float(np.linalg.norm(p1.pos - p0.pos))
    dot = abs(float(np.dot(p0.quat, p1.quat)))
    angle = 2.0 * math.acos(min(1.0, dot))
    n = max(2, int(math.ceil(dist / step)) + 1,
            int(math.ceil(angle / astep)) + 1)
    s = np.linspace(0.0, 1.0, n)
    quats = slerp(p0.quat, p1.quat, s)
    return [Transform(p0.pos + si * (p1.pos - p0.pos), quats[k])
            for k, si in enumerate(s)]


def _clearance_violation(state: _Belief, poses: list[Transform],
                         graze: float = GRAZE_TOL):
    """First (pair, depth) where the swept gripper or cargo digs into
    the scene deeper than a graze; containers are passable."""
    world = state.world
    others = [oid for oid in world.ids()
              if oid not in (GRIPPER_ID, state.attached)
              and not is_container(world, oid)]
    for pose in poses:
        moving = [world[GRIPPER_ID].obb(pose)]
        names = [GRIPPER_ID]
        if state.attached is not None:
            moving.append(world[state.attached].obb(pose.compose(state.rel)))
            names.append(state.attached)
        for obb, name in zip(moving, names):
            for oid in others:
                gap, _ = sat_gap(obb, world[oid].obb())
                if gap < -graze:
                    return (name, oid), -gap
    return None


def _check_reach(pos: np.ndarray) -> None:
    if np.linalg.norm(np.asarray(pos) - REACH_CENTER) > REACH_RADIUS:
        raise Unreachable(f"target {np.round(pos, 3).tolist()} outside reach")


# ---------------------------------------------------------------------------
# plan structure


@dataclass
class PlanStep:
    task: str
    bindings: dict[str, str]       # role var -> execution object id
    slots: dict[str, str]          # designator slot -> execution object id
    primitives: list[str] = field(default_factory=list)
    instructions: list[Instruction] = field(default_factory=list)


@dataclass
class PlanResult:
    steps: list[PlanStep]
    world0: WorldModel

    @property
    def program(self) -> list[Instruction]:
        return [ins for s in self.steps for ins in s.instructions]

    def designators(self) -> list[dict]:
        return [{"task": s.task, "bindings": s.bindings, "slots": s.slots,
                 "primitives": s.primitives} for s in self.steps]


class _Refiner:
    def __init__(self, memory: EpisodicMemory, world: WorldModel | None = None):
        self.memory = memory
        base = world if world is not None else execution_world(memory)
        self.state = _Belief(copy.deepcopy(base))
        self.world0 = copy.deepcopy(base)
        self.id_map = demo_to_exec_map(memory)
        self.schema = load_designators()

    # -- geometric helpers ---------------------------------------------

    def _grasp_feature(self, oid: str) -> Feature:
        feat = self.state.world[oid].model.feature("GraspPoint")
        if feat is None:
            raise PlanningFailure(f"{oid} has no grasp point", pair=(GRIPPER_ID, oid))
        return feat

    def _grasp_pose(self, oid: str) -> tuple[Transform, np.ndarray]:
        """Gripper pose with the palm on the grasp face, and the world
        approach axis pointing into the object."""
        inst = self.state.world[oid]
        feat = self._grasp_feature(oid)
        fpose = inst.feature_pose(feat)
        axis = quat_rotate(fpose.quat, np.array([0.0, 0.0, 1.0]))
        ghalf = self.state.world[GRIPPER_ID].model.half
        pos = fpose.pos - axis * ghalf[0]
        return Transform(pos, inst.pose.quat), axis

    def _axis_extent(self, oid: str, axis: np.ndarray) -> float:
        obb = self.state.world[oid].obb()
        local = np.abs(obb.rotation.T @ axis)
        return float(np.dot(local, obb.half))

    # -- primitive emission --------------------------------------------

    def _emit_move(self, step: PlanStep, name: str, target: Transform,
                   speed: float, direct_only: bool) -> None:
        _check_reach(target.pos)
        start = self.state.gripper
        legs = [(start, target)]
        if _clearance_violation(self.state, _swept(start, target)) is not None:
            if direct_only:
                pair, depth = _clearance_violation(
                    self.state, _swept(start, target))
                raise PlanningFailure(
                    f"straight move for {step.task} blocked: "
                    f"{pair[0]} into {pair[1]} by {depth * 1000:.1f} mm",
                    pair=pair)
            top = max(
                self.state.world[o].obb().aabb()[1][2]
                for o in self.state.world.ids())
            z_up = top + 0.08 + float(
                np.max(self.state.world[GRIPPER_ID].model.half))
            up = Transform(
                np.array([start.pos[0], start.pos[1], z_up]), start.quat)
            across = Transform(
                np.array([target.pos[0], target.pos[1], z_up]), target.quat)
            legs = [(start, up), (up, across), (across, target)]
            for a, b in legs:
                hit = _clearance_violation(self.state, _swept(a, b))
                if hit is not None:
                    raise PlanningFailure(
                        f"no collision-free path for {step.task}: "
                        f"{hit[0][0]} into {hit[0][1]}", pair=hit[0])
        for _, b in legs:
            _check_reach(b.pos)
            step.primitives.append(name)
            step.instructions.append(
                MoveL(tuple(b.pos), tuple(b.quat), speed))
            self.state.set_gripper(b)

    def _move_free(self, step: PlanStep, target: Transform) -> None:
        self._emit_move(step, "MoveFree", target, SPEED_FREE, direct_only=False)

    def _move_linear(self, step: PlanStep, target: Transform) -> None:
        self._emit_move(step, "MoveLinear", target, SPEED_FINE, direct_only=True)

    def _grasp_prefix(self, step: PlanStep, oid: str) -> None:
        if self.state.attached == oid:
            return
        if self.state.attached is not None:
            raise PlanningFailure(
                f"gripper already holds {self.state.attached}",
                pair=(GRIPPER_ID, oid))
        grasp, axis = self._grasp_pose(oid)
        pre = Transform(grasp.pos - axis * GRASP_BACKOFF, grasp.quat)
        self._move_free(step, pre)
        self._move_linear(step, grasp)
        feat = self._grasp_feature(oid)
        width = float(feat.params.get("width", 0.05))
        step.primitives.append("GripperClose")
        step.instructions.append(Grip("CLOSE", width))
        self.state.attached = oid
        self.state.rel = self.state.gripper.inverse().compose(
            self.state.world[oid].pose)

    def _open_gripper(self, step: PlanStep) -> None:
        step.primitives.append("GripperOpen")
        step.instructions.append(Grip("OPEN"))
        oid = self.state.attached
        self.state.attached = None
        self.state.rel = None
        if oid is not None:
            self.state.world[oid].pose = settle_pose(
                self.state.world, oid, GRIPPER_ID)

    def _retreat(self, step: PlanStep, direction: np.ndarray,
                 dist: float) -> None:
        g = self.state.gripper
        self._move_linear(
            step, Transform(g.pos + direction * dist, g.quat))

    def _gripper_target(self, obj_target: Transform) -> Transform:
        return obj_target.compose(self.state.rel.inverse())

    def _demo_pose(self, step: Step, var: str, t: float) -> Transform:
        demo_id = step.binding(var)
        return self.memory.store.pose_at(demo_id, t, clamp=True)

    # -- designator resolution ------------------------------------------

    def _resolve(self, step: Step) -> tuple[dict, dict]:
        spec = self.schema[step.task]
        bindings: dict[str, str] = {}
        slots: dict[str, str] = {}
        for var, demo_id in step.bindings:
            bindings[var] = self.id_map[demo_id]
        for slot, var in spec["slots"].items():
            demo_id = step.binding(var)
            demo_inst = self.memory.world[demo_id]
            t0 = step.action.t_start
            near = self.memory.store.pose_at(demo_id, t0, clamp=True).pos
            slots[slot] = resolve_object(
                self.state.world, demo_inst.model.cls, near)
        if "tool" in spec:
            slots["tool"] = GRIPPER_ID
        return bindings, slots

    # -- task recipes ----------------------------------------------------

    def _escape_vector(self, rid: str, oid: str) -> tuple[np.ndarray, float]:
        """Direction and travel that free a held object from its bearer."""
        world = self.state.world
        peg = world[rid].model.feature("Peg")
        if peg is not None:
            fpose = world[rid].feature_pose(peg)
            axis = quat_rotate(fpose.quat, np.array([0.0, 0.0, 1.0]))
            ahead = float(np.dot(fpose.pos - world[oid].pose.pos, axis))
            travel = ahead + self._axis_extent(oid, axis) + 0.04
            return axis, max(0.05, travel)
        return np.array([0.0, 0.0, 1.0]), 0.12

    def _expand(self, dstep: Step) -> PlanStep:
        task = dstep.task
        bindings, slots = self._resolve(dstep)
        pstep = PlanStep(task, bindings, slots)
        world = self.state.world
        target = slots.get("target") or slots.get("hole")

        if task == "Reaching":
            grasp, axis = self._grasp_pose(target)
            pre = Transform(grasp.pos - axis * GRASP_BACKOFF, grasp.quat)
            self._move_free(pstep, pre)
            self._move_linear(pstep, grasp)

        elif task == "Grasping":
            self._grasp_prefix(pstep, target)

        elif task == "Releasing":
            back = None
            if self.state.attached is not None:
                _, axis = self._grasp_pose(self.state.attached)
                back = -axis
            self._open_gripper(pstep)
            if back is not None:
                self._retreat(pstep, back, GRASP_BACKOFF)

        elif task in ("PickingUp", "Lifting"):
            rid = slots["support"]
            self._grasp_prefix(pstep, target)
            axis, travel = self._escape_vector(rid, target)
            g = self.state.gripper
            self._move_linear(pstep, Transform(g.pos + axis * travel, g.quat))

        elif task == "Retracting":
            rid = slots["support"]
            self._grasp_prefix(pstep, target)
            v = world[target].pose.pos - world[rid].pose.pos
            v[2] = 0.0
            n = np.linalg.norm(v)
            if n < 1e-9:
                v, _ = self._escape_vector(rid, target)
            else:
                v = v / n
            g = self.state.gripper
            self._move_linear(pstep, Transform(g.pos + v * 0.10, g.quat))

        elif task == "Transporting":
            self._grasp_prefix(pstep, target)
            a = dstep.action
            for t in ((a.t_start + a.t_end) / 2.0, a.t_end - 0.01):
                obj_target = self._demo_pose(dstep, "L", t)
                self._move_free(pstep, self._gripper_target(obj_target))

        elif task in ("Placing", "Closing"):
            rid = slots["container"]
            self._grasp_prefix(pstep, target)
            olo, ohi = world[rid].obb().aabb()
            h = self._axis_extent(target, np.array([0.0, 0.0, 1.0]))
            center = world[rid].pose.pos
            place_obj = Transform(
                np.array([center[0], center[1], ohi[2] + h + PLACE_DROP]),
                world[target].pose.quat)
            place = self._gripper_target(place_obj)
            pre = Transform(place.pos + np.array([0.0, 0.0, 0.10]), place.quat)
            self._move_free(pstep, pre)
            self._move_linear(pstep, place)
            self._open_gripper(pstep)
            self._retreat(pstep, np.array([0.0, 0.0, 1.0]), 0.12)

        elif task == "PuttingDown":
            rid = slots["support"]
            self._grasp_prefix(pstep, target)
            atoms = static_atoms(world, GRIPPER_ID, self.state.attached)
            resting = ("Support", (target, rid)) in atoms
            if not resting:
                olo, ohi = world[rid].obb().aabb()
                h = self._axis_extent(target, np.array([0.0, 0.0, 1.0]))
                pos = world[target].pose.pos
                xy_ok = np.all(pos[:2] >= olo[:2]) and np.all(pos[:2] <= ohi[:2])
                xy = pos[:2] if xy_ok else world[rid].pose.pos[:2]
                down_obj = Transform(
                    np.array([xy[0], xy[1], ohi[2] + h]),
                    world[target].pose.quat)
                self._move_linear(pstep, self._gripper_target(down_obj))
            _, axis = self._grasp_pose(target)
            self._open_gripper(pstep)
            self._retreat(pstep, -axis, GRASP_BACKOFF)

        elif task == "Lowering":
            rid = slots["container"]
            self._grasp_prefix(pstep, target)
            olo, _ = world[rid].obb().aabb()
            h = self._axis_extent(target, np.array([0.0, 0.0, 1.0]))
            pos = world[target].pose.pos
            rest_obj = Transform(
                np.array([pos[0], pos[1], olo[2] + CONTAINER_FLOOR + h]),
                world[target].pose.quat)
            self._move_linear(pstep, self._gripper_target(rest_obj))

        elif task == "Sliding":
            self._grasp_prefix(pstep, target)
            obj_target = self._demo_pose(dstep, "L", dstep.action.t_end - 0.01)
            self._move_linear(pstep, self._gripper_target(obj_target))

        elif task == "Opening":
            rid = slots["container"]
            self._grasp_prefix(pstep, target)
            _, ohi = world[rid].obb().aabb()
            h = self._axis_extent(target, np.array([0.0, 0.0, 1.0]))
            pos = world[target].pose.pos
            out_obj = Transform(
                np.array([pos[0], pos[1], ohi[2] + h + PLACE_DROP]),
                world[target].pose.quat)
            self._move_linear(pstep, self._gripper_target(out_obj))

        elif task == "HoleOnPeg":
            rid = slots["peg"]
            self._grasp_prefix(pstep, target)
            peg = world[rid].model.feature("Peg")
            hole = world[target].model.feature("Hole")
            if peg is None or hole is None:
                raise PlanningFailure(
                    f"{task} needs a peg on {rid} and a hole on {target}",
                    pair=(target, rid))
            fpose = world[rid].feature_pose(peg)
            axis = quat_rotate(fpose.quat, np.array([0.0, 0.0, 1.0]))
            seat_obj = self._demo_pose(dstep, "L", dstep.action.t_end - 0.01)
            h = self._axis_extent(target, axis)
            hole_off = quat_rotate(seat_obj.quat, hole.local.pos)
            approach_pos = fpose.pos + axis * (h + 0.03) - hole_off
            approach_obj = Transform(approach_pos, seat_obj.quat)
            self._move_free(pstep, self._gripper_target(approach_obj))
            to_seat = float(np.dot(approach_obj.pos - seat_obj.pos, axis))
            pstep.primitives.append("MoveContact")
            pstep.instructions.append(
                MoveC(tuple(-axis), to_seat + 0.02, CONTACT_FORCE_LIMIT))
            contact_travel = 0.03 + CONTACT_EPS - HANG_GAP_GUESS
            pstep.primitives.append("SpiralSearch")
            pstep.instructions.append(
                Spiral(tuple(axis), SPIRAL_RADIUS, SPIRAL_PITCH,
                       CONTACT_FORCE_LIMIT))
            push = to_seat - contact_travel + 0.004
            pstep.primitives.append("PushForce")
            pstep.instructions.append(
                PushF(tuple(-axis), PUSH_FORCE, max(0.01, push)))
            seat_g = self._gripper_target(seat_obj)
            self.state.set_gripper(
                Transform(seat_g.pos + axis * 0.004, seat_g.quat))

        else:
            raise PlanningFailure(f"no recipe for task {task!r}")

        return pstep


def refine_candidate(candidate: tuple[Step, ...] | list[Step],
                     memory: EpisodicMemory,
                     world: WorldModel | None = None) -> PlanResult:
    """Expand one candidate reading into an executable plan.

    Raises PlanningFailure, NoMatch, or Unreachable when the reading
    cannot be realized in the execution world.
    """
    refiner = _Refiner(memory, world)
    steps = [refiner._expand(s) for s in candidate]
    return PlanResult(steps, refiner.world0)
