"""Geometry checks against slow, independent oracles.

The oracles here avoid the library's own algorithms: closest pairs come
from alternating projection onto the two boxes, and overlap ground
truth from dense point sampling.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demo2ril.geometry import (OBB, Transform, gjk_distance, kabsch,
                               matrix_to_quat, obb_distance,
                               quat_from_axis_angle, quat_angle, quat_conj,
                               quat_mul, quat_normalize, quat_rotate,
                               quat_to_matrix, sat_gap, slerp)


def _project_onto_obb(p, obb):
    local = obb.rotation.T @ (p - obb.center)
    clamped = np.clip(local, -obb.half, obb.half)
    return obb.center + obb.rotation @ clamped


def closest_pair_oracle(a, b, iters=2000, tol=1e-12):
    """Alternating projection between two convex boxes."""
    x = a.center.astype(float)
    prev = np.inf
    for _ in range(iters):
        y = _project_onto_obb(x, b)
        x = _project_onto_obb(y, a)
        d = float(np.linalg.norm(x - y))
        if prev - d < tol:
            break
        prev = d
    return d, x, y


def random_obb(rng, spread=0.8):
    q = quat_normalize(rng.normal(size=4))
    return OBB(rng.uniform(-spread, spread, 3), q,
               rng.uniform(0.05, 0.4, 3))


def random_quat(rng):
    return quat_normalize(rng.normal(size=4))


# ---------------------------------------------------------------------------
# quaternions


def test_quat_mul_matches_matrix_product():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = random_quat(rng), random_quat(rng)
        lhs = quat_to_matrix(quat_mul(a, b))
        rhs = quat_to_matrix(a) @ quat_to_matrix(b)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_quat_rotate_matches_matrix():
    rng = np.random.default_rng(2)
    for _ in range(50):
        q = random_quat(rng)
        v = rng.normal(size=3)
        assert np.allclose(quat_rotate(q, v), quat_to_matrix(q) @ v,
                           atol=1e-12)
    vs = rng.normal(size=(7, 3))
    q = random_quat(rng)
    assert np.allclose(quat_rotate(q, vs), vs @ quat_to_matrix(q).T,
                       atol=1e-12)


def test_quat_conj_inverts_rotation():
    rng = np.random.default_rng(3)
    q = random_quat(rng)
    v = rng.normal(size=3)
    assert np.allclose(quat_rotate(quat_conj(q), quat_rotate(q, v)), v,
                       atol=1e-12)


def test_axis_angle_and_angle_metric():
    axis = np.array([0.0, 0.0, 1.0])
    q = quat_from_axis_angle(axis, 0.3)
    assert np.isclose(quat_angle(q, np.array([1.0, 0, 0, 0])), 0.3)
    v = quat_rotate(q, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(v, [np.cos(0.3), np.sin(0.3), 0.0])


def test_matrix_quat_round_trip_canonical():
    rng = np.random.default_rng(4)
    for _ in range(100):
        q = random_quat(rng)
        r = quat_to_matrix(q)
        back = matrix_to_quat(r)
        assert back[0] >= 0.0
        assert np.allclose(quat_to_matrix(back), r, atol=1e-9)


def test_slerp_endpoints_and_midpoint():
    rng = np.random.default_rng(5)
    q0, q1 = random_quat(rng), random_quat(rng)
    assert np.allclose(slerp(q0, q1, 0.0), q0, atol=1e-12) or \
        np.allclose(slerp(q0, q1, 0.0), -q0, atol=1e-12)
    full = quat_angle(q0, q1)
    mid = slerp(q0, q1, 0.5)
    assert np.isclose(quat_angle(q0, mid), full / 2.0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_rotation_matrices_are_proper(seed):
    rng = np.random.default_rng(seed)
    r = quat_to_matrix(random_quat(rng))
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(r), 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# transforms


def test_transform_compose_inverse():
    rng = np.random.default_rng(6)
    for _ in range(30):
        a = Transform(rng.normal(size=3), random_quat(rng))
        b = Transform(rng.normal(size=3), random_quat(rng))
        p = rng.normal(size=3)
        assert np.allclose(a.compose(b).apply(p), a.apply(b.apply(p)),
                           atol=1e-12)
        assert np.allclose(a.inverse().apply(a.apply(p)), p, atol=1e-12)


def test_kabsch_recovers_rigid_transform():
    rng = np.random.default_rng(7)
    for _ in range(20):
        truth = Transform(rng.normal(size=3), random_quat(rng))
        src = rng.normal(size=(40, 3))
        fit = kabsch(src, truth.apply(src))
        assert np.linalg.norm(fit.pos - truth.pos) < 1e-9
        # the angle metric bottoms out around sqrt(eps) via arccos
        assert quat_angle(fit.quat, truth.quat) < 1e-6


# ---------------------------------------------------------------------------
# box distances


def test_obb_distance_matches_alternating_projection():
    rng = np.random.default_rng(8)
    tested = 0
    while tested < 120:
        a, b = random_obb(rng), random_obb(rng)
        if sat_gap(a, b)[0] <= 1e-6:
            continue
        tested += 1
        d_lib, pa, pb = obb_distance(a, b)
        d_oracle, _, _ = closest_pair_oracle(a, b)
        assert d_lib == pytest.approx(d_oracle, abs=1e-5)
        assert np.linalg.norm(pa - pb) == pytest.approx(d_lib, abs=1e-6)


def test_sat_gap_lower_bounds_true_distance():
    rng = np.random.default_rng(9)
    for _ in range(200):
        a, b = random_obb(rng), random_obb(rng)
        gap, axis = sat_gap(a, b)
        assert np.isclose(np.linalg.norm(axis), 1.0, atol=1e-9)
        if gap > 0:
            d, _, _ = closest_pair_oracle(a, b)
            assert gap <= d + 1e-9


def test_sat_and_gjk_agree_on_overlap():
    rng = np.random.default_rng(10)
    for _ in range(200):
        a, b = random_obb(rng), random_obb(rng)
        overlap_sat = sat_gap(a, b)[0] <= 0.0
        d, _, _ = obb_distance(a, b)
        assert overlap_sat == (d <= 1e-9)


def test_known_axis_aligned_cases():
    a = OBB(np.zeros(3), np.array([1.0, 0, 0, 0]), np.array([1.0, 1.0, 1.0]))
    b = OBB(np.array([3.0, 0, 0]), np.array([1.0, 0, 0, 0]),
            np.array([1.0, 1.0, 1.0]))
    assert sat_gap(a, b)[0] == pytest.approx(1.0)
    assert obb_distance(a, b)[0] == pytest.approx(1.0)
    # push them into each other by 0.25
    c = OBB(np.array([1.75, 0, 0]), np.array([1.0, 0, 0, 0]),
            np.array([1.0, 1.0, 1.0]))
    assert sat_gap(a, c)[0] == pytest.approx(-0.25)


def test_point_sampling_never_beats_reported_distance():
    # surface samples give an upper bound on the true closest distance
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b = random_obb(rng), random_obb(rng)
        d, _, _ = obb_distance(a, b)
        va = a.vertices()
        vb = b.vertices()
        u = rng.uniform(size=(300, 1, 1))
        pa = (u * va[rng.integers(0, 8, 300), None] +
              (1 - u) * va[rng.integers(0, 8, 300), None])[:, 0]
        pb = ((1 - u) * vb[rng.integers(0, 8, 300), None] +
              u * vb[rng.integers(0, 8, 300), None])[:, 0]
        sampled = np.linalg.norm(pa[:, None] - pb[None], axis=2).min()
        assert d <= sampled + 1e-9


def test_contains_point_and_inflate():
    rng = np.random.default_rng(12)
    obb = random_obb(rng)
    assert obb.contains_point(obb.center)
    corner = obb.center + obb.rotation @ obb.half
    assert obb.contains_point(corner, slack=1e-9)
    out = obb.center + obb.rotation @ (obb.half + 0.01)
    assert not obb.contains_point(out)
    assert obb.inflated(0.02).contains_point(out)
