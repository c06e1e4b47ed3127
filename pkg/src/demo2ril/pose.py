"""Box pose recovery from noisy, partially visible point clouds.

The object is a rectangular box with a small raised tab next to its
hole, which breaks the 180-degree ambiguities a plain box would have.
Estimation runs in three stages: single-linkage clustering drops stray
points, principal axes give a coarse frame, and iterative closest
point refinement from a fixed fan of twelve initial rotations picks
the alignment that explains the most points.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateCloud, EmptyCloud
from .geometry import Transform, kabsch, matrix_to_quat, quat_angle
from .model import ObjectModel

CLUSTER_CUTOFF = 0.012
ICP_MAX_ITERS = 50
ICP_TOL = 1e-7
ICP_SUBSAMPLE = 2000
INLIER_DIST = 0.005
SURFACE_SPACING = 0.004
MARKER_RADIUS = 0.006
MARKER_HEIGHT = 0.003
PLAUSIBLE_ANGLE = np.radians(20.0)

# 180-degree rotations that map a plain box onto itself
_BOX_SYMMETRY = [
    np.diag([1.0, 1.0, 1.0]),
    np.diag([1.0, -1.0, -1.0]),
    np.diag([-1.0, 1.0, -1.0]),
    np.diag([-1.0, -1.0, 1.0]),
]


# ---------------------------------------------------------------------------
# cloud I/O and cleanup


def load_xyz(path) -> np.ndarray:
    with warnings.catch_warnings():
        # empty files get our own error, not numpy's warning
        warnings.simplefilter("ignore", UserWarning)
        pts = np.loadtxt(path, dtype=float, ndmin=2)
    if pts.size == 0:
        raise EmptyCloud(f"{path} holds no points")
    if pts.shape[1] != 3:
        raise EmptyCloud(f"{path}: expected 3 columns, got {pts.shape[1]}")
    return pts


def save_xyz(path, points: np.ndarray) -> None:
    np.savetxt(path, np.asarray(points, float), fmt="%.6f")


def remove_outliers(points: np.ndarray,
                    cutoff: float = CLUSTER_CUTOFF) -> np.ndarray:
    """Largest single-linkage cluster of the cloud.

    Points closer than cutoff are linked; the biggest connected group
    survives.  A size tie goes to the cluster whose centroid lies
    nearest the full-cloud centroid.
    """
    pts = np.asarray(points, float)
    if pts.size == 0:
        raise EmptyCloud("empty point cloud")
    n = len(pts)
    pairs = cKDTree(pts).query_pairs(cutoff, output_type="ndarray")
    adjacency = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(adjacency, directed=False)
    sizes = np.bincount(labels, minlength=n_comp)
    center = pts.mean(axis=0)
    best = None
    best_rank = None
    for c in np.flatnonzero(sizes == sizes.max()):
        members = np.flatnonzero(labels == c)
        d = float(np.linalg.norm(pts[members].mean(axis=0) - center))
        rank = (d, int(members[0]))
        if best_rank is None or rank < best_rank:
            best_rank, best = rank, members
    return pts[best]


def principal_axes(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centroid and right-handed principal frame, axes by spread.

    Columns of the returned matrix are the eigenvectors of the point
    covariance in descending eigenvalue order; the third is rebuilt as
    a cross product so the frame is always proper.
    """
    pts = np.asarray(points, float)
    if len(pts) < 3:
        raise DegenerateCloud(f"{len(pts)} points cannot span a frame")
    center = pts.mean(axis=0)
    cov = np.cov((pts - center).T)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    if vals[1] <= 1e-10 * max(vals[0], 1e-30):
        raise DegenerateCloud("points are collinear")
    frame = np.column_stack([vecs[:, 0], vecs[:, 1],
                             np.cross(vecs[:, 0], vecs[:, 1])])
    return center, frame


def candidate_rotations(base: np.ndarray) -> list[np.ndarray]:
    """Twelve proper rotations seeding the fit: six axis relabelings of
    the principal frame, two sign choices each."""
    out = []
    for perm in itertools.permutations(range(3)):
        p = np.zeros((3, 3))
        for col, row in enumerate(perm):
            p[row, col] = 1.0
        parity = np.linalg.det(p)
        signs = [(1, 1, 1), (1, -1, -1)] if parity > 0 else \
                [(-1, 1, 1), (1, 1, -1)]
        for s in signs:
            out.append(base @ p @ np.diag(s))
    assert len(out) == 12
    for m in out:
        assert abs(np.linalg.det(m) - 1.0) < 1e-9
    for i in range(12):
        for j in range(i + 1, 12):
            assert np.abs(out[i] - out[j]).max() > 1e-9
    return out


# ---------------------------------------------------------------------------
# model surface sampling


def _face_grid(half: np.ndarray, axis: int, side: float,
               spacing: float) -> np.ndarray:
    others = [i for i in range(3) if i != axis]
    lines = []
    for i in others:
        n = max(2, int(round(2 * half[i] / spacing)) + 1)
        lines.append(np.linspace(-half[i], half[i], n))
    u, v = np.meshgrid(lines[0], lines[1], indexing="ij")
    pts = np.zeros((u.size, 3))
    pts[:, axis] = side * half[axis]
    pts[:, others[0]] = u.ravel()
    pts[:, others[1]] = v.ravel()
    return pts


def marker_center(model: ObjectModel) -> np.ndarray:
    """The tab sits on the top face, offset toward +x."""
    h = model.half
    return np.array([0.5 * h[0], 0.0, h[2]])


def _marker_grid(model: ObjectModel, spacing: float) -> np.ndarray:
    c = marker_center(model)
    line = np.arange(-MARKER_RADIUS, MARKER_RADIUS + spacing / 2, spacing / 2)
    u, v = np.meshgrid(line, line, indexing="ij")
    keep = u ** 2 + v ** 2 <= MARKER_RADIUS ** 2
    pts = np.column_stack([c[0] + u[keep], c[1] + v[keep],
                           np.full(keep.sum(), c[2] + MARKER_HEIGHT)])
    return pts


def surface_points(model: ObjectModel, spacing: float = SURFACE_SPACING,
                   marker: bool = True) -> np.ndarray:
    """Deterministic sample of the box surface in the model frame."""
    faces = [_face_grid(model.half, axis, side, spacing)
             for axis in range(3) for side in (-1.0, 1.0)]
    if marker:
        faces.append(_marker_grid(model, spacing))
    return np.vstack(faces)


# ---------------------------------------------------------------------------
# synthetic observation


def synth_cloud(model: ObjectModel, pose: Transform, n: int = 1500,
                seed: int = 0, noise: float = 0.002,
                outlier_frac: float = 0.10,
                view: np.ndarray | None = None) -> np.ndarray:
    """A simulated scan: one visible half of the box plus tab, with
    Gaussian noise and a fraction of uniform clutter."""
    rng = np.random.default_rng(seed)
    h = model.half
    dims = [(1, 2), (0, 2), (0, 1)]
    areas = np.array([4 * h[a] * h[b] for a, b in dims])
    areas = np.repeat(areas, 2)
    view = np.array([-0.45, -0.35, -0.82]) if view is None else \
        np.asarray(view, float)
    view = view / np.linalg.norm(view)

    local = []
    face_ids = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    for k in range(n):
        axis = face_ids[k] // 2
        side = 1.0 if face_ids[k] % 2 else -1.0
        a, b = dims[axis]
        p = np.zeros(3)
        p[axis] = side * h[axis]
        p[a] = uv[k, 0] * h[a]
        p[b] = uv[k, 1] * h[b]
        local.append(p)
    local = np.array(local)
    normals = np.zeros((n, 3))
    normals[np.arange(n), face_ids // 2] = np.where(face_ids % 2, 1.0, -1.0)

    m = max(8, int(0.06 * n))
    c = marker_center(model)
    ang = rng.uniform(0, 2 * np.pi, m)
    rad = MARKER_RADIUS * np.sqrt(rng.uniform(0, 1, m))
    tab = np.column_stack([c[0] + rad * np.cos(ang), c[1] + rad * np.sin(ang),
                           np.full(m, c[2] + MARKER_HEIGHT)])
    local = np.vstack([local, tab])
    normals = np.vstack([normals, np.tile([0.0, 0.0, 1.0], (m, 1))])

    world_normals = normals @ np.asarray(
        _quat_matrix(pose.quat)).T
    visible = (world_normals @ view) < -1e-9
    pts = pose.apply(local[visible])
    pts = pts + rng.normal(0.0, noise, pts.shape)

    k = int(outlier_frac * len(pts))
    if k:
        lo, hi = _cloud_bounds(pts)
        clutter = rng.uniform(lo - 0.15, hi + 0.15, size=(k, 3))
        pts = np.vstack([pts, clutter])
    return pts


def _cloud_bounds(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return pts.min(axis=0), pts.max(axis=0)


def _quat_matrix(q):
    from .geometry import quat_to_matrix
    return quat_to_matrix(q)


# ---------------------------------------------------------------------------
# iterative closest point


@dataclass
class ICPResult:
    transform: Transform
    rms: float
    iterations: int
    inlier_fraction: float
    history: tuple[float, ...] = ()  # residual after each matching pass


def icp(cloud: np.ndarray, model_points: np.ndarray, init: Transform,
        max_iters: int = ICP_MAX_ITERS, tol: float = ICP_TOL,
        tree: cKDTree | None = None) -> ICPResult:
    """Point-to-point alignment of a model sample onto a cloud.

    Correspondences are exact nearest neighbors, so the residual is
    non-increasing; that is asserted rather than trusted.  Large clouds
    are thinned by a deterministic stride.
    """
    cloud = np.asarray(cloud, float)
    if len(cloud) > ICP_SUBSAMPLE:
        stride = int(np.ceil(len(cloud) / ICP_SUBSAMPLE))
        cloud = cloud[::stride]
    if tree is None:
        tree = cKDTree(model_points)
    t = init
    prev = np.inf
    iters = 0
    dists = None
    history = []
    for iters in range(1, max_iters + 1):
        in_model = t.inverse().apply(cloud)
        dists, idx = tree.query(in_model)
        rms = float(np.sqrt(np.mean(dists ** 2)))
        assert rms <= prev + 1e-12, "alignment residual increased"
        history.append(rms)
        if prev - rms < tol:
            prev = rms
            break
        prev = rms
        t = kabsch(model_points[idx], cloud)
    inliers = float(np.mean(dists <= INLIER_DIST)) if dists is not None else 0.0
    return ICPResult(t, prev, iters, inliers, tuple(history))


# ---------------------------------------------------------------------------
# full estimation


@dataclass
class PoseEstimate:
    transform: Transform
    rms: float
    inlier_fraction: float
    n_inits: int
    implausible: bool  # no candidate matched the allowed orientations


def estimate_pose(points: np.ndarray, model: ObjectModel,
                  allowed: list[np.ndarray] | None = None,
                  max_angle: float = PLAUSIBLE_ANGLE) -> PoseEstimate:
    """Fit the model to a scan.

    All twelve seeds are refined by ICP and the winner is retried over
    the box flip group, since a plain box fits its own 180-degree twins
    equally well and only the tab decides.  When allowed orientations
    are given, fits whose rotation strays more than max_angle from
    every allowed quaternion are discarded before picking the best; if
    nothing survives, the filter is abandoned and the estimate is
    flagged implausible.
    """
    pts = remove_outliers(points)
    center, frame = principal_axes(pts)
    inits = candidate_rotations(frame)

    model_pts = surface_points(model)
    tree = cKDTree(model_pts)
    score = lambda r: (-r.inlier_fraction, r.rms)
    pool = []
    for rot in inits:
        start = Transform(center, matrix_to_quat(rot))
        pool.append(icp(pts, model_pts, start, tree=tree))

    base = min(pool, key=score).transform
    rot = _quat_matrix(base.quat)
    for sym in _BOX_SYMMETRY:
        start = Transform(base.pos, matrix_to_quat(rot @ sym))
        pool.append(icp(pts, model_pts, start, tree=tree))

    implausible = False
    candidates = pool
    if allowed is not None:
        candidates = [
            r for r in pool
            if any(quat_angle(r.transform.quat, qa) <= max_angle
                   for qa in allowed)]
        if not candidates:
            candidates = pool
            implausible = True
    best = min(candidates, key=score)
    return PoseEstimate(best.transform, best.rms, best.inlier_fraction,
                        len(inits), implausible)
