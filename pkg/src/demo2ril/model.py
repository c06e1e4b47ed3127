"""Core data model: class taxonomy, object models, worlds, and episodes.

An episode is everything a demonstration leaves behind: a semantic map
of the scene (typed objects with box geometry and named features), a
uniformly sampled pose trajectory per object, and an optional event
timeline.  Downstream stages only ever read this model; nothing here
interprets motion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import OutOfRange, TaxonomyError
from .geometry import OBB, Transform, quat_rotate, sat_gap


# --------------------------------------------------------------------------
# taxonomy

class Taxonomy:
    """Single-inheritance class hierarchy with subsumption queries."""

    def __init__(self, parents: dict[str, str | None]):
        for cls, parent in parents.items():
            if parent is not None and parent not in parents:
                raise TaxonomyError(f"unknown parent {parent!r} of {cls!r}")
        self._parents = dict(parents)
        for cls in self._parents:
            seen = set()
            cur: str | None = cls
            while cur is not None:
                if cur in seen:
                    raise TaxonomyError(f"cycle through {cur!r}")
                seen.add(cur)
                cur = self._parents[cur]

    @classmethod
    def load(cls, path: str | Path) -> "Taxonomy":
        data = json.loads(Path(path).read_text())
        return cls(data["classes"])

    @classmethod
    def default(cls) -> "Taxonomy":
        text = resources.files("demo2ril").joinpath("data/taxonomy.json").read_text()
        return cls(json.loads(text)["classes"])

    def __contains__(self, cls_name: str) -> bool:
        return cls_name in self._parents

    def check(self, cls_name: str) -> str:
        if cls_name not in self._parents:
            raise TaxonomyError(f"unknown class {cls_name!r}")
        return cls_name

    def ancestors(self, cls_name: str) -> list[str]:
        """Chain from cls_name up to its root, inclusive."""
        self.check(cls_name)
        out = []
        cur: str | None = cls_name
        while cur is not None:
            out.append(cur)
            cur = self._parents[cur]
        return out

    def is_a(self, cls_name: str, ancestor: str) -> bool:
        """Reflexive subsumption test."""
        self.check(ancestor)
        return ancestor in self.ancestors(cls_name)

    def descendants(self, cls_name: str) -> set[str]:
        self.check(cls_name)
        return {c for c in self._parents if self.is_a(c, cls_name)}


# --------------------------------------------------------------------------
# objects and worlds

@dataclass(frozen=True)
class Feature:
    """Named point of interest on an object, posed in the object frame.

    The feature axis is the +z axis of its local transform: a Peg's axis
    points from the mount toward free space past the tip, a Hole's axis
    runs through the bore, a SupportSurface's axis is its outward normal,
    and a GraspPoint's axis is the approach direction for a gripper.
    """

    kind: str
    name: str
    local: Transform
    params: dict = field(default_factory=dict)

    def axis_local(self) -> np.ndarray:
        return quat_rotate(self.local.quat, np.array([0.0, 0.0, 1.0]))


@dataclass(frozen=True)
class ObjectModel:
    """Box-shaped object type: class name, full extents, features."""

    cls: str
    extents: np.ndarray
    features: tuple[Feature, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "extents", np.asarray(self.extents, dtype=float))
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def half(self) -> np.ndarray:
        return self.extents / 2.0

    def feature(self, kind: str) -> Feature | None:
        for f in self.features:
            if f.kind == kind:
                return f
        return None


@dataclass
class ObjectInstance:
    obj_id: str
    model: ObjectModel
    pose: Transform

    def obb(self, pose: Transform | None = None) -> OBB:
        p = pose if pose is not None else self.pose
        return OBB(p.pos, p.quat, self.model.half)

    def feature_pose(self, feature: Feature, pose: Transform | None = None) -> Transform:
        p = pose if pose is not None else self.pose
        return p.compose(feature.local)


class WorldModel:
    """The semantic map: typed, posed box objects addressed by id."""

    def __init__(self, taxonomy: Taxonomy | None = None):
        self.taxonomy = taxonomy or Taxonomy.default()
        self.objects: dict[str, ObjectInstance] = {}

    def add(self, obj: ObjectInstance) -> None:
        self.taxonomy.check(obj.model.cls)
        if obj.obj_id in self.objects:
            raise ValueError(f"duplicate object id {obj.obj_id!r}")
        self.objects[obj.obj_id] = obj

    def __getitem__(self, obj_id: str) -> ObjectInstance:
        return self.objects[obj_id]

    def __contains__(self, obj_id: str) -> bool:
        return obj_id in self.objects

    def ids(self) -> list[str]:
        return sorted(self.objects)

    def of_class(self, cls_name: str) -> list[str]:
        """Ids of all instances whose class is subsumed by cls_name."""
        return sorted(
            oid for oid, o in self.objects.items()
            if self.taxonomy.is_a(o.model.cls, cls_name))

    def agent_id(self) -> str:
        agents = self.of_class("Agent")
        if len(agents) != 1:
            raise ValueError(f"expected exactly one agent, found {agents}")
        return agents[0]

    def is_fixed(self, obj_id: str) -> bool:
        return self.taxonomy.is_a(self.objects[obj_id].model.cls, "Fixture")

    def max_penetration(self, poses: dict[str, Transform] | None = None) -> float:
        """Deepest pairwise box interpenetration in meters (0 if none)."""
        ids = self.ids()
        worst = 0.0
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                pa = poses[a] if poses else self.objects[a].pose
                pb = poses[b] if poses else self.objects[b].pose
                gap, _ = sat_gap(self.objects[a].obb(pa), self.objects[b].obb(pb))
                if gap < 0:
                    worst = max(worst, -gap)
        return worst

    def to_dict(self) -> dict:
        objs = []
        for oid in self.ids():
            o = self.objects[oid]
            objs.append({
                "id": oid,
                "class": o.model.cls,
                "extents": o.model.extents.tolist(),
                "pose": _pose_to_dict(o.pose),
                "features": [
                    {
                        "kind": f.kind,
                        "name": f.name,
                        "pos": f.local.pos.tolist(),
                        "quat": f.local.quat.tolist(),
                        "params": f.params,
                    }
                    for f in o.model.features
                ],
            })
        return {"objects": objs}

    @classmethod
    def from_dict(cls, data: dict, taxonomy: Taxonomy | None = None) -> "WorldModel":
        world = cls(taxonomy)
        for entry in data["objects"]:
            feats = tuple(
                Feature(f["kind"], f["name"],
                        Transform(np.array(f["pos"]), np.array(f["quat"])),
                        dict(f.get("params", {})))
                for f in entry.get("features", ()))
            model = ObjectModel(entry["class"], np.array(entry["extents"]), feats)
            world.add(ObjectInstance(entry["id"], model, _pose_from_dict(entry["pose"])))
        return world


def _pose_to_dict(pose: Transform) -> dict:
    return {"pos": pose.pos.tolist(), "quat": pose.quat.tolist()}


def _pose_from_dict(data: dict) -> Transform:
    return Transform(np.array(data["pos"]), np.array(data["quat"]))


# --------------------------------------------------------------------------
# trajectories and episodes

DEFAULT_DT = 0.01


@dataclass
class Trajectory:
    positions: np.ndarray
    quats: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.quats = np.asarray(self.quats, dtype=float)
        if len(self.positions) != len(self.quats):
            raise ValueError("position/orientation sample counts differ")

    def __len__(self) -> int:
        return len(self.positions)

    def pose(self, k: int) -> Transform:
        return Transform(self.positions[k], self.quats[k])


class TrajectoryStore:
    """Uniformly sampled pose tracks, one per object, on a shared clock."""

    def __init__(self, tracks: dict[str, Trajectory], dt: float = DEFAULT_DT,
                 t0: float = 0.0):
        if not tracks:
            raise ValueError("empty trajectory store")
        lengths = {len(t) for t in tracks.values()}
        if len(lengths) != 1:
            raise ValueError(f"tracks have differing lengths: {sorted(lengths)}")
        self.tracks = dict(tracks)
        self.dt = float(dt)
        self.t0 = float(t0)
        self.n_samples = lengths.pop()

    @property
    def t_end(self) -> float:
        return self.time_of(self.n_samples - 1)

    def time_of(self, k: int) -> float:
        return self.t0 + k * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def index_at(self, t: float, clamp: bool = False) -> int:
        k = int(round((t - self.t0) / self.dt))
        if clamp:
            return min(max(k, 0), self.n_samples - 1)
        if k < 0 or k >= self.n_samples:
            raise OutOfRange(f"time {t} outside [{self.t0}, {self.t_end}]")
        return k

    def pose_at(self, obj_id: str, t: float, clamp: bool = False) -> Transform:
        return self.tracks[obj_id].pose(self.index_at(t, clamp=clamp))


@dataclass(frozen=True)
class Event:
    """Timestamped annotation carried along for reporting; never used to
    derive structure from motion."""

    time: float
    kind: str
    payload: dict = field(default_factory=dict)


class EpisodicMemory:
    """One recorded demonstration: semantic map, trajectories, events."""

    def __init__(self, world: WorldModel, store: TrajectoryStore,
                 events: list[Event] | None = None):
        self.world = world
        self.store = store
        self.events = list(events or [])

    def validate(self, max_penetration: float = 1e-3) -> None:
        """Reject episodes whose tracks and map disagree or whose initial
        scene interpenetrates more than max_penetration meters."""
        world_ids = set(self.world.ids())
        track_ids = set(self.store.tracks)
        if world_ids != track_ids:
            raise ValueError(
                f"world/track id mismatch: only in world {sorted(world_ids - track_ids)}, "
                f"only in tracks {sorted(track_ids - world_ids)}")
        start = {oid: self.store.tracks[oid].pose(0) for oid in world_ids}
        worst = self.world.max_penetration(start)
        if worst > max_penetration:
            raise ValueError(
                f"initial scene interpenetrates by {worst * 1e3:.2f} mm")

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "world.json").write_text(
            json.dumps(self.world.to_dict(), indent=2, sort_keys=True))
        (out / "events.json").write_text(json.dumps(
            [{"time": e.time, "kind": e.kind, "payload": e.payload}
             for e in self.events],
            indent=2, sort_keys=True))
        arrays: dict[str, np.ndarray] = {
            "_meta": np.array([self.store.t0, self.store.dt]),
        }
        for oid, track in self.store.tracks.items():
            arrays[f"pos:{oid}"] = track.positions
            arrays[f"quat:{oid}"] = track.quats
        np.savez_compressed(out / "trajectories.npz", **arrays)

    @classmethod
    def load(cls, in_dir: str | Path,
             taxonomy: Taxonomy | None = None) -> "EpisodicMemory":
        src = Path(in_dir)
        world = WorldModel.from_dict(
            json.loads((src / "world.json").read_text()), taxonomy)
        events = [
            Event(e["time"], e["kind"], e.get("payload", {}))
            for e in json.loads((src / "events.json").read_text())
        ]
        with np.load(src / "trajectories.npz") as data:
            t0, dt = data["_meta"]
            tracks = {}
            for key in data.files:
                if key.startswith("pos:"):
                    oid = key[4:]
                    tracks[oid] = Trajectory(data[key], data[f"quat:{oid}"])
        memory = cls(world, TrajectoryStore(tracks, dt=float(dt), t0=float(t0)), events)
        memory.validate()
        return memory


# --------------------------------------------------------------------------
# situations and actions

SITUATION_KINDS = ("Contact", "Support", "Containment", "Grasp")


@dataclass(frozen=True)
class Situation:
    """A force-dynamic relation holding over a closed time interval.

    Contact is symmetric and stores participants in lexicographic order.
    Support(a, b) reads "a is borne by b", Containment(a, b) reads "a is
    inside b", and Grasp(a, b) reads "a is held by b".
    """

    kind: str
    participants: tuple[str, ...]
    t_start: float
    t_end: float

    def __post_init__(self):
        if self.kind not in SITUATION_KINDS:
            raise ValueError(f"unknown situation kind {self.kind!r}")

    def involves(self, obj_id: str) -> bool:
        return obj_id in self.participants

    def active_at(self, t: float) -> bool:
        return self.t_start <= t <= self.t_end

    def key(self) -> tuple:
        return (self.kind, self.participants, self.t_start, self.t_end)


@dataclass(frozen=True)
class Action:
    """A maximal span between adjacent segmentation boundaries."""

    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start
