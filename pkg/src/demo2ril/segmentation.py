"""Force-dynamic segmentation of demonstration trajectories.

Walks every object pair through the recorded samples and detects four
relation kinds: Contact (box distance within a small tolerance), Support
(resting on or hanging from a contacting object while vertically still),
Containment (center inside another box), and Grasp (agent contact with
negligible relative motion, held long enough).  Detected relations are
debounced against sample noise, then their start and end instants that
involve the agent or a grasped object become action boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import gjk_distance, quats_to_matrices, traj_sat_gap
from .model import Action, EpisodicMemory, Situation

_CORNERS = np.array([
    [sx, sy, sz]
    for sx in (-1.0, 1.0)
    for sy in (-1.0, 1.0)
    for sz in (-1.0, 1.0)
])


@dataclass(frozen=True)
class SegmentationParams:
    """Detector thresholds.  Defaults assume meters, seconds, 100 Hz."""

    contact_eps: float = 0.005
    support_vel_eps: float = 0.02
    support_margin_ratio: float = 0.2
    grasp_hold_time: float = 0.1
    grasp_rel_eps: float = 0.005
    hysteresis: int = 3


@dataclass
class SegmentationResult:
    situations: list[Situation]
    boundaries: list[float]
    actions: list[Action]
    t0: float
    t_end: float
    dt: float

    def by_kind(self, kind: str) -> list[Situation]:
        return [s for s in self.situations if s.kind == kind]


def debounce(mask: np.ndarray, hysteresis: int) -> np.ndarray:
    """Suppress state flips that persist for fewer than hysteresis samples.

    The filtered signal starts False and only adopts a new value once a
    run of at least hysteresis samples carries it; shorter runs are
    absorbed into the surrounding state.
    """
    mask = np.asarray(mask, dtype=bool)
    out = np.empty_like(mask)
    state = False
    i = 0
    n = len(mask)
    while i < n:
        j = i + 1
        while j < n and mask[j] == mask[i]:
            j += 1
        if bool(mask[i]) != state and (j - i) >= hysteresis:
            state = bool(mask[i])
        out[i:j] = state
        i = j
    return out


def true_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (first, last) sample index pairs of each True run."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    padded = np.concatenate([[False], mask, [False]])
    flips = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(flips[k]), int(flips[k + 1]) - 1) for k in range(0, len(flips), 2)]


class _Body:
    """Per-object precomputed sample arrays."""

    def __init__(self, positions: np.ndarray, quats: np.ndarray, half: np.ndarray):
        self.pos = positions
        self.half = half
        self.rots = quats_to_matrices(quats)
        ext = np.abs(self.rots) @ half
        self.lo = positions - ext
        self.hi = positions + ext


def _vertical_speed(positions: np.ndarray, dt: float) -> np.ndarray:
    """|dz/dt| per sample, central differences with one-sided ends."""
    z = positions[:, 2]
    v = np.empty_like(z)
    if len(z) == 1:
        v[:] = 0.0
        return v
    v[1:-1] = (z[2:] - z[:-2]) / (2.0 * dt)
    v[0] = (z[1] - z[0]) / dt
    v[-1] = (z[-1] - z[-2]) / dt
    return np.abs(v)


def _contact_mask(a: _Body, b: _Body, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample contact flags for one pair, plus the SAT gap array.

    The gap array holds +inf where the broad phase already ruled contact
    out; gaps in (0, eps] are sharpened with an exact distance query.
    """
    n = len(a.pos)
    near = np.all((a.lo <= b.hi + eps) & (b.lo <= a.hi + eps), axis=1)
    gaps = np.full(n, np.inf)
    idx = np.flatnonzero(near)
    if len(idx):
        gaps[idx] = traj_sat_gap(
            a.pos[idx], a.rots[idx], a.half,
            b.pos[idx], b.rots[idx], b.half)
    contact = gaps <= 0.0
    band = np.flatnonzero((gaps > 0.0) & (gaps <= eps))
    for k in band:
        va = a.pos[k] + (_CORNERS * a.half) @ a.rots[k].T
        vb = b.pos[k] + (_CORNERS * b.half) @ b.rots[k].T
        dist, _, _ = gjk_distance(va, vb)
        if dist <= eps:
            contact[k] = True
    return contact, gaps


def _witness_heights(a: _Body, b: _Body, samples: np.ndarray) -> np.ndarray:
    """Z coordinate of the contact region per requested sample.

    Uses the vertical midpoint of the slab where the two bodies' z
    extents meet (their overlap, or the gap between them).  A single
    closest-point query would be arbitrary for face-on-face contact,
    where any point of the shared face is equally close: side contact
    between equal boxes must read as touching at center height, not at
    whichever corner the query happens to return.
    """
    lo = np.maximum(a.lo[samples, 2], b.lo[samples, 2])
    hi = np.minimum(a.hi[samples, 2], b.hi[samples, 2])
    return 0.5 * (lo + hi)


def segment(memory: EpisodicMemory,
            params: SegmentationParams | None = None) -> SegmentationResult:
    """Detect situations and cut the episode into candidate actions."""
    p = params or SegmentationParams()
    world = memory.world
    store = memory.store
    hand = world.agent_id()
    ids = world.ids()
    times = store.times()
    dt = store.dt
    n = store.n_samples
    hold_samples = max(1, int(round(p.grasp_hold_time / dt)))

    bodies = {
        oid: _Body(store.tracks[oid].positions, store.tracks[oid].quats,
                   world[oid].model.half)
        for oid in ids
    }
    vspeed = {oid: _vertical_speed(bodies[oid].pos, dt) for oid in ids}

    # contact: all unordered pairs, lexicographic participant order
    contact_mask: dict[tuple[str, str], np.ndarray] = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            raw, _ = _contact_mask(bodies[a], bodies[b], p.contact_eps)
            contact_mask[(a, b)] = debounce(raw, p.hysteresis)

    def pair_key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a < b else (b, a)

    # containment: directed, agent excluded, container must be the bigger body
    contain_mask: dict[tuple[str, str], np.ndarray] = {}
    for a in ids:
        for b in ids:
            if a == b or hand in (a, b):
                continue
            half_a, half_b = world[a].model.half, world[b].model.half
            if np.linalg.norm(half_a) >= np.linalg.norm(half_b):
                continue
            cmask = contact_mask[pair_key(a, b)]
            if not cmask.any():
                continue
            body_a, body_b = bodies[a], bodies[b]
            rel = body_a.pos - body_b.pos
            local = np.einsum("nji,nj->ni", body_b.rots, rel)
            inside = np.all(np.abs(local) <= body_b.half, axis=1)
            mask = debounce(inside, p.hysteresis) & cmask
            if mask.any():
                contain_mask[(a, b)] = mask

    # support: directed, agent excluded, fixtures are never the supportee
    support_mask: dict[tuple[str, str], np.ndarray] = {}
    for a in ids:
        if world.is_fixed(a):
            continue
        for b in ids:
            if a == b or hand in (a, b):
                continue
            key = pair_key(a, b)
            cmask = contact_mask[key]
            # both party must be quasi-static vertically; a body does not
            # rest on its own content, nor on anything it sits inside of
            still = (vspeed[a] <= p.support_vel_eps) & \
                (vspeed[b] <= p.support_vel_eps)
            candidate = cmask & still
            for contained in (contain_mask.get((a, b)), contain_mask.get((b, a))):
                if contained is not None:
                    candidate &= ~contained
            samples = np.flatnonzero(candidate)
            if not len(samples):
                continue
            body_a = bodies[a]
            witness_z = _witness_heights(body_a, bodies[b], samples)
            center_z = body_a.pos[samples, 2]
            margin = p.support_margin_ratio * 0.5 * (
                body_a.hi[samples, 2] - body_a.lo[samples, 2])
            ok = (witness_z <= center_z - margin) | (witness_z >= center_z + margin)
            raw = np.zeros(n, dtype=bool)
            raw[samples[ok]] = True
            mask = debounce(raw, p.hysteresis) & cmask
            if mask.any():
                support_mask[(a, b)] = mask

    # grasp: agent contact with negligible relative motion, held long enough
    grasp_mask: dict[tuple[str, str], np.ndarray] = {}
    for o in ids:
        if o == hand or world.is_fixed(o):
            continue
        cmask = contact_mask[pair_key(o, hand)]
        if not cmask.any():
            continue
        body_o, body_h = bodies[o], bodies[hand]
        rel = body_o.pos - body_h.pos
        local = np.einsum("nji,nj->ni", body_h.rots, rel)
        step = np.zeros(n)
        if n > 1:
            step[1:] = np.linalg.norm(np.diff(local, axis=0), axis=1)
        raw = cmask & (step <= p.grasp_rel_eps)
        mask = debounce(raw, p.hysteresis) & cmask
        kept = np.zeros(n, dtype=bool)
        for i0, i1 in true_runs(mask):
            if i1 - i0 + 1 >= hold_samples:
                kept[i0:i1 + 1] = True
        if kept.any():
            grasp_mask[(o, hand)] = kept

    situations: list[Situation] = []
    for (a, b), mask in contact_mask.items():
        for i0, i1 in true_runs(mask):
            situations.append(Situation("Contact", (a, b), times[i0], times[i1]))
    for (a, b), mask in contain_mask.items():
        for i0, i1 in true_runs(mask):
            situations.append(Situation("Containment", (a, b), times[i0], times[i1]))
    for (a, b), mask in support_mask.items():
        for i0, i1 in true_runs(mask):
            situations.append(Situation("Support", (a, b), times[i0], times[i1]))
    for (o, h), mask in grasp_mask.items():
        for i0, i1 in true_runs(mask):
            situations.append(Situation("Grasp", (o, h), times[i0], times[i1]))
    situations.sort(key=lambda s: (s.t_start, s.kind, s.participants))

    grasps = [s for s in situations if s.kind == "Grasp"]

    def grasped_at(obj: str, t: float) -> bool:
        tol = dt / 2.0
        return any(
            g.participants[0] == obj and g.t_start - tol <= t <= g.t_end + tol
            for g in grasps)

    boundary_idx = {0, n - 1}
    for s in situations:
        for t in (s.t_start, s.t_end):
            if hand in s.participants or any(
                    grasped_at(obj, t) for obj in s.participants):
                boundary_idx.add(store.index_at(t))
    boundaries = [times[k] for k in sorted(boundary_idx)]

    actions = [
        Action(boundaries[i], boundaries[i + 1])
        for i in range(len(boundaries) - 1)
        if boundaries[i + 1] > boundaries[i]
    ]
    return SegmentationResult(
        situations=situations,
        boundaries=boundaries,
        actions=actions,
        t0=float(times[0]),
        t_end=float(times[-1]),
        dt=dt,
    )
