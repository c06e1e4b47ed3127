"""Rigid-body geometry: quaternions, oriented boxes, and distance queries.

Conventions: quaternions are (w, x, y, z) unit arrays, frames are
right-handed with Z up, and all lengths are in meters.  Trajectory-level
helpers are vectorized over the sample axis so callers can classify
thousands of poses per pair without Python loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12
_AXIS_EPS = 1e-9


# --------------------------------------------------------------------------
# quaternions

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < _EPS:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by unit quaternion q.  v may be (3,) or (N, 3)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[1:]
    w = q[0]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quats_to_matrices(quats: np.ndarray) -> np.ndarray:
    """Vectorized quat_to_matrix for an (N, 4) array.  Returns (N, 3, 3)."""
    q = np.asarray(quats, dtype=float)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((len(q), 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion with non-negative w."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (m[2, 1] - m[1, 2]) / s,
            (m[0, 2] - m[2, 0]) / s,
            (m[1, 0] - m[0, 1]) / s,
        ])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([
            (m[2, 1] - m[1, 2]) / s,
            0.25 * s,
            (m[0, 1] + m[1, 0]) / s,
            (m[0, 2] + m[2, 0]) / s,
        ])
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([
            (m[0, 2] - m[2, 0]) / s,
            (m[0, 1] + m[1, 0]) / s,
            0.25 * s,
            (m[1, 2] + m[2, 1]) / s,
        ])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([
            (m[1, 0] - m[0, 1]) / s,
            (m[0, 2] + m[2, 0]) / s,
            (m[1, 2] + m[2, 1]) / s,
            0.25 * s,
        ])
    q = quat_normalize(q)
    if q[0] < 0:
        q = -q
    return q


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < _EPS:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in radians of the relative rotation between two unit quats."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * np.arccos(min(1.0, d))


def slerp(q0: np.ndarray, q1: np.ndarray, u) -> np.ndarray:
    """Spherical interpolation.  u may be a scalar or an (N,) array."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if d > 1.0 - 1e-10:
        out = q0[None, :] + u_arr[:, None] * (q1 - q0)[None, :]
        out /= np.linalg.norm(out, axis=1, keepdims=True)
    else:
        theta = np.arccos(min(1.0, d))
        s = np.sin(theta)
        w0 = np.sin((1.0 - u_arr) * theta) / s
        w1 = np.sin(u_arr * theta) / s
        out = w0[:, None] * q0[None, :] + w1[:, None] * q1[None, :]
    return out[0] if np.isscalar(u) or np.ndim(u) == 0 else out


# --------------------------------------------------------------------------
# rigid transforms

@dataclass(frozen=True)
class Transform:
    """Rigid transform: rotate by quat, then translate by pos."""

    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float))
        object.__setattr__(self, "quat", quat_normalize(self.quat))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return quat_rotate(self.quat, points) + self.pos

    def compose(self, other: "Transform") -> "Transform":
        """self applied after other: (self @ other).apply(x) == self.apply(other.apply(x))."""
        return Transform(self.apply(other.pos), quat_mul(self.quat, other.quat))

    def inverse(self) -> "Transform":
        qi = quat_conj(self.quat)
        return Transform(-quat_rotate(qi, self.pos), qi)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)


def kabsch(src: np.ndarray, dst: np.ndarray) -> Transform:
    """Least-squares rigid alignment mapping src points onto dst points.

    Returns the proper rigid transform T minimizing sum ||T(src_i) - dst_i||^2.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Transform(cd - r @ cs, matrix_to_quat(r))


# --------------------------------------------------------------------------
# oriented boxes

_CORNER_SIGNS = np.array([
    [sx, sy, sz]
    for sx in (-1.0, 1.0)
    for sy in (-1.0, 1.0)
    for sz in (-1.0, 1.0)
])


@dataclass(frozen=True)
class OBB:
    """Oriented box: center, orientation quaternion, and half extents."""

    center: np.ndarray
    quat: np.ndarray
    half: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "quat", quat_normalize(self.quat))
        object.__setattr__(self, "half", np.asarray(self.half, dtype=float))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def vertices(self) -> np.ndarray:
        return self.center + (_CORNER_SIGNS * self.half) @ self.rotation.T

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        ext = np.abs(self.rotation) @ self.half
        return self.center - ext, self.center + ext

    def contains_point(self, p: np.ndarray, slack: float = 0.0) -> bool:
        local = self.rotation.T @ (np.asarray(p, dtype=float) - self.center)
        return bool(np.all(np.abs(local) <= self.half + slack))

    def inflated(self, amount: float) -> "OBB":
        return OBB(self.center, self.quat, self.half + amount)


# --------------------------------------------------------------------------
# separating-axis queries

def sat_gap(a: OBB, b: OBB) -> tuple[float, np.ndarray]:
    """Best separating-axis gap between two boxes.

    Returns (gap, axis).  gap > 0 means the boxes are separated by at
    least gap along axis (a lower bound on their true distance); gap <= 0
    means they overlap and -gap is the exact minimum translation depth.
    axis is unit length and points from a toward b.
    """
    ra, rb = a.rotation, b.rotation
    t = b.center - a.center
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            cr = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(cr)
            if n > _AXIS_EPS:
                axes.append(cr / n)
    best_gap = -np.inf
    best_axis = axes[0]
    for ax in axes:
        proj_a = float(np.abs(ax @ ra) @ a.half)
        proj_b = float(np.abs(ax @ rb) @ b.half)
        sep = abs(float(ax @ t)) - proj_a - proj_b
        if sep > best_gap:
            best_gap = sep
            best_axis = ax
    if best_axis @ t < 0:
        best_axis = -best_axis
    return best_gap, best_axis


def traj_aabbs(centers: np.ndarray, rots: np.ndarray, half: np.ndarray):
    """World AABBs for one box across N samples: returns (lo, hi), each (N, 3)."""
    ext = np.abs(rots) @ np.asarray(half, dtype=float)
    return centers - ext, centers + ext


def traj_sat_gap(centers_a, rots_a, half_a, centers_b, rots_b, half_b) -> np.ndarray:
    """Vectorized sat_gap over N samples of two box trajectories.

    Inputs are (N, 3) centers, (N, 3, 3) rotation matrices, and (3,) half
    extents.  Returns the (N,) gap array with the sign convention of
    sat_gap.
    """
    half_a = np.asarray(half_a, dtype=float)
    half_b = np.asarray(half_b, dtype=float)
    t = centers_b - centers_a
    cols_a = np.transpose(rots_a, (0, 2, 1))
    cols_b = np.transpose(rots_b, (0, 2, 1))
    crosses = np.cross(cols_a[:, :, None, :], cols_b[:, None, :, :]).reshape(-1, 9, 3)
    norms = np.linalg.norm(crosses, axis=2)
    valid = norms > _AXIS_EPS
    safe = np.where(valid[:, :, None], crosses / np.maximum(norms, _AXIS_EPS)[:, :, None], 0.0)
    axes = np.concatenate([cols_a, cols_b, safe], axis=1)
    valid_all = np.concatenate(
        [np.ones((len(t), 6), dtype=bool), valid], axis=1)
    proj_a = np.abs(np.einsum("nkj,nji->nki", axes, rots_a)) @ half_a
    proj_b = np.abs(np.einsum("nkj,nji->nki", axes, rots_b)) @ half_b
    tproj = np.abs(np.einsum("nkj,nj->nk", axes, t))
    seps = tproj - proj_a - proj_b
    seps[~valid_all] = -np.inf
    return seps.max(axis=1)


# --------------------------------------------------------------------------
# GJK distance with witness points

def _closest_on_simplex(pts: np.ndarray):
    """Closest point to the origin in the convex hull of up to 4 points.

    Returns (point, lambdas, subset_indices).  Subsets are scanned in
    order of increasing size so the supporting simplex stays minimal.
    """
    k = len(pts)
    masks = sorted(range(1, 1 << k), key=lambda m: bin(m).count("1"))
    best = None
    for mask in masks:
        idx = [i for i in range(k) if mask >> i & 1]
        sub = pts[idx]
        m = len(idx)
        mat = np.zeros((m + 1, m + 1))
        mat[:m, :m] = 2.0 * (sub @ sub.T)
        mat[:m, m] = 1.0
        mat[m, :m] = 1.0
        rhs = np.zeros(m + 1)
        rhs[m] = 1.0
        try:
            sol = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(mat, rhs, rcond=None)[0]
        lam = sol[:m]
        if np.any(lam < -1e-10):
            continue
        lam = np.clip(lam, 0.0, None)
        s = lam.sum()
        if s <= 0:
            continue
        lam = lam / s
        v = lam @ sub
        d2 = float(v @ v)
        if best is None or d2 < best[0] - 1e-15:
            best = (d2, v, lam, idx)
    assert best is not None
    return best[1], best[2], best[3]


def gjk_distance(verts_a: np.ndarray, verts_b: np.ndarray,
                 max_iter: int = 64) -> tuple[float, np.ndarray, np.ndarray]:
    """Distance between two convex point sets with witness points.

    Returns (distance, point_on_a, point_on_b).  A distance of exactly
    0.0 means the hulls touch or overlap; the witness points then
    coincide at a common point.
    """
    va = np.asarray(verts_a, dtype=float)
    vb = np.asarray(verts_b, dtype=float)

    def support(d):
        ia = int(np.argmax(va @ d))
        ib = int(np.argmin(vb @ d))
        return va[ia] - vb[ib], ia, ib

    d0 = va.mean(axis=0) - vb.mean(axis=0)
    if np.linalg.norm(d0) < _EPS:
        d0 = np.array([1.0, 0.0, 0.0])
    w0, ia0, ib0 = support(d0)
    simplex = [w0]
    pairs = [(ia0, ib0)]
    for _ in range(max_iter):
        v, lam, idx = _closest_on_simplex(np.array(simplex))
        simplex = [simplex[i] for i in idx]
        pairs = [pairs[i] for i in idx]
        vv = float(v @ v)
        if vv < 1e-18 or len(simplex) == 4:
            # origin inside the difference: hulls touch or overlap
            pa = sum(l * va[p[0]] for l, p in zip(lam, pairs))
            pb = sum(l * vb[p[1]] for l, p in zip(lam, pairs))
            return 0.0, np.asarray(pa), np.asarray(pb)
        w, ia, ib = support(-v)
        if (ia, ib) in pairs or vv - float(v @ w) <= 1e-10 * max(1.0, vv):
            pa = sum(l * va[p[0]] for l, p in zip(lam, pairs))
            pb = sum(l * vb[p[1]] for l, p in zip(lam, pairs))
            return float(np.sqrt(vv)), np.asarray(pa), np.asarray(pb)
        simplex.append(w)
        pairs.append((ia, ib))
    v, lam, idx = _closest_on_simplex(np.array(simplex))
    simplex = [simplex[i] for i in idx]
    pairs = [pairs[i] for i in idx]
    pa = sum(l * va[p[0]] for l, p in zip(lam, pairs))
    pb = sum(l * vb[p[1]] for l, p in zip(lam, pairs))
    return float(np.linalg.norm(v)), np.asarray(pa), np.asarray(pb)


def obb_distance(a: OBB, b: OBB) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact distance between two boxes with witness points.

    Overlapping boxes report distance 0.0 with witnesses at the center of
    the intersection of their world AABBs, which is a stable interior
    point for contact classification.
    """
    gap, _ = sat_gap(a, b)
    if gap <= 0.0:
        lo_a, hi_a = a.aabb()
        lo_b, hi_b = b.aabb()
        lo = np.maximum(lo_a, lo_b)
        hi = np.minimum(hi_a, hi_b)
        mid = 0.5 * (lo + hi)
        return 0.0, mid.copy(), mid.copy()
    dist, pa, pb = gjk_distance(a.vertices(), b.vertices())
    return dist, pa, pb
