"""Discrete kinematic execution of instruction programs.

The simulator replays a program against a copy of the execution world.
Bodies are rigid boxes; the gripper teleports along interpolated paths
in small steps, carrying at most one attached body.  Contact-seeking
and force-bounded instructions run on proximity geometry rather than
dynamics: a move-to-contact stops when the moving set comes within the
contact band of the scene, a spiral search snaps a hole onto the
nearest peg axis when the residual misalignment is within its radius,
and a guarded push advances until new interpenetration would exceed a
graze.

After every plan step the world is frozen and the step's postcondition
literals are checked against statically derived situation atoms; a plan
whose execution finishes but whose checkpoints do not all hold is not
counted as a demonstrated task carried out successfully.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .codegen import Grip, Halt, Instruction, MoveC, MoveL, PushF, Spiral
from .geometry import Transform, quat_rotate, sat_gap, slerp
from .model import WorldModel
from .plan import (CONTACT_EPS, GRAZE_TOL, GRIPPER_ID, PlanResult,
                   SPEED_FINE, is_container, settle_pose, static_atoms)
from .semantics import TaskDefinition, extend_bindings

ADVANCE_STEP = 0.002
GRIP_REACH = 0.02

OK = "Success"
COLLISION = "CollisionFailure"
SEARCH = "SearchFailure"
FORCE = "ForceLimitFailure"


@dataclass
class Checkpoint:
    index: int
    task: str
    ok: bool
    unmet: list[str] = field(default_factory=list)


@dataclass
class SimResult:
    status: str
    failure: str | None
    world: WorldModel
    checkpoints: list[Checkpoint]
    trace: list[dict]

    @property
    def ok(self) -> bool:
        return self.status == OK

    def task_success(self) -> bool:
        return self.ok and all(c.ok for c in self.checkpoints)


class _Failure(Exception):
    def __init__(self, status: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


class Simulator:
    """Executes instructions against a mutable copy of a world."""

    def __init__(self, world: WorldModel):
        self.world = copy.deepcopy(world)
        self.attached: str | None = None
        self.rel: Transform | None = None
        self.t = 0.0
        self.trace: list[dict] = []

    # -- state helpers ---------------------------------------------------

    @property
    def gripper(self) -> Transform:
        return self.world[GRIPPER_ID].pose

    def _set_gripper(self, pose: Transform) -> None:
        self.world[GRIPPER_ID].pose = pose
        if self.attached is not None:
            self.world[self.attached].pose = pose.compose(self.rel)

    def _movers(self, pose: Transform):
        out = [(GRIPPER_ID, self.world[GRIPPER_ID].obb(pose))]
        if self.attached is not None:
            out.append((self.attached,
                        self.world[self.attached].obb(pose.compose(self.rel))))
        return out

    def _obstacles(self) -> list[str]:
        return [oid for oid in self.world.ids()
                if oid not in (GRIPPER_ID, self.attached)
                and not is_container(self.world, oid)]

    def _min_gap(self, pose: Transform) -> float:
        gap = math.inf
        for _, obb in self._movers(pose):
            for oid in self._obstacles():
                g, _ = sat_gap(obb, self.world[oid].obb())
                gap = min(gap, g)
        return gap

    def _collision(self, pose: Transform, graze: float = GRAZE_TOL):
        for name, obb in self._movers(pose):
            for oid in self._obstacles():
                g, _ = sat_gap(obb, self.world[oid].obb())
                if g < -graze:
                    return name, oid, -g
        return None

    def _log(self, op: str, note: str = "") -> None:
        g = self.gripper
        self.trace.append({
            "t": round(self.t, 4), "op": op,
            "pos": [round(float(v), 5) for v in g.pos],
            "attached": self.attached, "note": note})

    # -- instruction semantics --------------------------------------------

    def _do_movel(self, ins: MoveL) -> None:
        target = Transform(np.array(ins.pos), np.array(ins.quat))
        start = self.gripper
        dist = float(np.linalg.norm(target.pos - start.pos))
        angle = 2.0 * math.acos(min(1.0, abs(float(
            np.dot(start.quat, target.quat)))))
        n = max(2, int(math.ceil(dist / 0.005)) + 1,
                int(math.ceil(angle / math.radians(2.0))) + 1)
        s = np.linspace(0.0, 1.0, n)
        quats = slerp(start.quat, target.quat, s)
        for k in range(1, n):
            pose = Transform(start.pos + s[k] * (target.pos - start.pos),
                             quats[k])
            hit = self._collision(pose)
            if hit is not None:
                self._set_gripper(pose)
                raise _Failure(COLLISION,
                               f"{hit[0]} hit {hit[1]} "
                               f"({hit[2] * 1000:.1f} mm deep)")
            self._set_gripper(pose)
        self.t += dist / max(ins.speed, 1e-6)
        self._log("MOVEL")

    def _do_movec(self, ins: MoveC) -> None:
        d = np.asarray(ins.direction, float)
        norm = np.linalg.norm(d)
        if norm < 1e-9:
            raise _Failure(SEARCH, "contact move with zero direction")
        d = d / norm
        start = self.gripper
        travelled = 0.0
        while travelled < ins.max_travel:
            step = min(ADVANCE_STEP, ins.max_travel - travelled)
            pose = Transform(start.pos + (travelled + step) * d, start.quat)
            if self._min_gap(pose) <= CONTACT_EPS:
                self._set_gripper(pose)
                self.t += (travelled + step) / SPEED_FINE
                self._log("MOVEC", "contact")
                return
            self._set_gripper(pose)
            travelled += step
        self.t += travelled / SPEED_FINE
        self._log("MOVEC", "no contact")
        raise _Failure(SEARCH,
                       f"no contact within {ins.max_travel:.3f} m")

    def _do_spiral(self, ins: Spiral) -> None:
        if self.attached is None:
            raise _Failure(SEARCH, "spiral search with empty gripper")
        inst = self.world[self.attached]
        hole = inst.model.feature("Hole")
        if hole is None:
            raise _Failure(SEARCH, f"{self.attached} has no hole")
        hole_pos = inst.feature_pose(hole).pos
        best = None
        for oid in self._obstacles():
            peg = self.world[oid].model.feature("Peg")
            if peg is None:
                continue
            fpose = self.world[oid].feature_pose(peg)
            axis = quat_rotate(fpose.quat, np.array([0.0, 0.0, 1.0]))
            off = hole_pos - fpose.pos
            lateral = off - np.dot(off, axis) * axis
            miss = float(np.linalg.norm(lateral))
            if best is None or miss < best[0]:
                best = (miss, lateral)
        if best is None:
            raise _Failure(SEARCH, "no peg near the held part")
        miss, lateral = best
        self.t += 1.0
        if miss > ins.radius + 1e-9:
            self._log("SPIRAL", "miss")
            raise _Failure(SEARCH,
                           f"misalignment {miss * 1000:.1f} mm exceeds "
                           f"search radius")
        g = self.gripper
        self._set_gripper(Transform(g.pos - lateral, g.quat))
        self._log("SPIRAL", "aligned")

    def _do_pushf(self, ins: PushF) -> None:
        d = np.asarray(ins.direction, float)
        norm = np.linalg.norm(d)
        if norm < 1e-9:
            raise _Failure(FORCE, "push with zero direction")
        d = d / norm
        start = self.gripper
        travelled = 0.0
        while travelled < ins.max_travel:
            step = min(ADVANCE_STEP, ins.max_travel - travelled)
            pose = Transform(start.pos + (travelled + step) * d, start.quat)
            if self._collision(pose) is not None:
                break
            self._set_gripper(pose)
            travelled += step
        self.t += max(travelled, ADVANCE_STEP) / SPEED_FINE
        if travelled < 0.1 * ins.max_travel:
            self._log("PUSHF", "blocked")
            raise _Failure(FORCE,
                           f"push stalled at {travelled * 1000:.1f} mm of "
                           f"{ins.max_travel * 1000:.1f} mm")
        self._log("PUSHF")

    def _do_grip(self, ins: Grip) -> None:
        if ins.mode == "CLOSE":
            if self.attached is None:
                probe = self.world[GRIPPER_ID].obb().inflated(GRIP_REACH)
                best = None
                for oid in self.world.ids():
                    if oid == GRIPPER_ID or self.world.is_fixed(oid):
                        continue
                    g, _ = sat_gap(self.world[GRIPPER_ID].obb(),
                                   self.world[oid].obb())
                    if g <= GRIP_REACH and (best is None or g < best[0]):
                        if sat_gap(probe, self.world[oid].obb())[0] <= 0.0:
                            best = (g, oid)
                if best is not None:
                    self.attached = best[1]
                    self.rel = self.gripper.inverse().compose(
                        self.world[best[1]].pose)
            self.t += 0.5
            self._log("GRIP", "close")
        else:
            oid = self.attached
            self.attached = None
            self.rel = None
            if oid is not None:
                self.world[oid].pose = settle_pose(
                    self.world, oid, GRIPPER_ID)
            self.t += 0.5
            self._log("GRIP", "open")

    def execute(self, ins: Instruction) -> None:
        if isinstance(ins, MoveL):
            self._do_movel(ins)
        elif isinstance(ins, MoveC):
            self._do_movec(ins)
        elif isinstance(ins, Spiral):
            self._do_spiral(ins)
        elif isinstance(ins, PushF):
            self._do_pushf(ins)
        elif isinstance(ins, Grip):
            self._do_grip(ins)
        elif isinstance(ins, Halt):
            self._log("HALT")
        else:
            raise _Failure(SEARCH, f"unknown instruction {ins!r}")


def _post_unmet(task: TaskDefinition, binding: dict,
                atoms: frozenset) -> list[str]:
    unmet = []
    for lit in task.post:
        if not extend_bindings([lit], atoms, [dict(binding)]):
            unmet.append(str(lit))
    return unmet


def simulate_plan(plan: PlanResult, tasks: dict[str, TaskDefinition],
                  world: WorldModel | None = None) -> SimResult:
    """Run a refined plan step by step, checking postconditions.

    Execution failures stop the run with the failing status; checkpoint
    misses do not stop it, they only mark the step unmet.
    """
    sim = Simulator(world if world is not None else plan.world0)
    checkpoints: list[Checkpoint] = []
    for idx, step in enumerate(plan.steps):
        try:
            for ins in step.instructions:
                sim.execute(ins)
        except _Failure as f:
            checkpoints.append(Checkpoint(idx, step.task, False, [f.detail]))
            return SimResult(f.status, f.detail, sim.world,
                             checkpoints, sim.trace)
        atoms = static_atoms(sim.world, GRIPPER_ID, sim.attached)
        unmet = _post_unmet(tasks[step.task], step.bindings, atoms)
        checkpoints.append(Checkpoint(idx, step.task, not unmet, unmet))
    return SimResult(OK, None, sim.world, checkpoints, sim.trace)


def run_program(world: WorldModel, instructions: list[Instruction]) -> SimResult:
    """Execute a bare instruction list with no task checking."""
    sim = Simulator(world)
    try:
        for ins in instructions:
            sim.execute(ins)
    except _Failure as f:
        return SimResult(f.status, f.detail, sim.world, [], sim.trace)
    return SimResult(OK, None, sim.world, [], sim.trace)
