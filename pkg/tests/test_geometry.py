"""Tests for anchor frames, relative poses, and rigid transforms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instasim.geometry import (AnchorPose, apply_rigid_transform, normalize_angle,
                               normalize_angle_array, relative_pose,
                               relative_pose_batch, relative_pose_fields)

finite_angles = st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False)
coords = st.floats(-1000.0, 1000.0, allow_nan=False, allow_infinity=False)


def poses(draw_coords=coords):
    return st.builds(AnchorPose, x=draw_coords, y=draw_coords, heading=finite_angles)


class TestNormalizeAngle:
    def test_identity(self):
        assert normalize_angle(0.0) == 0.0

    def test_three_pi(self):
        assert normalize_angle(3 * math.pi) == pytest.approx(math.pi)

    def test_negative_pi_maps_to_pi(self):
        assert normalize_angle(-math.pi) == pytest.approx(math.pi)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            normalize_angle(float("nan"))
        with pytest.raises(ValueError):
            normalize_angle(float("inf"))

    @given(finite_angles)
    def test_congruent_and_in_range(self, x):
        r = normalize_angle(x)
        assert -math.pi < r <= math.pi
        assert math.isclose(math.cos(r), math.cos(x), abs_tol=1e-9)
        assert math.isclose(math.sin(r), math.sin(x), abs_tol=1e-9)

    @given(st.lists(finite_angles, min_size=1, max_size=20))
    def test_array_matches_scalar(self, xs):
        arr = normalize_angle_array(np.array(xs))
        for a, x in zip(arr, xs):
            assert a == pytest.approx(normalize_angle(x), abs=1e-12)


class TestRelativePose:
    def test_identical_poses(self):
        p = AnchorPose(3.0, -2.0, 0.7)
        r = relative_pose(p, p)
        assert r.distance == 0.0
        assert r.dheading_cos == pytest.approx(1.0)
        assert r.dheading_sin == pytest.approx(0.0)
        # zero-distance azimuth convention
        assert r.azimuth_cos == pytest.approx(1.0)
        assert r.azimuth_sin == pytest.approx(0.0)

    def test_axis_aligned(self):
        r = relative_pose(AnchorPose(0, 0, 0), AnchorPose(1, 0, 0))
        dh, az, d = relative_pose_fields(AnchorPose(0, 0, 0), AnchorPose(1, 0, 0))
        assert (dh, az, d) == (0.0, 0.0, 1.0)
        assert r.distance == 1.0

    def test_rotated_frame(self):
        # Target at (0,1) with heading pi, seen from a frame rotated by pi/2:
        # rotate (0,1) into the pi/2 frame -> (1,0), so azimuth 0.
        dh, az, d = relative_pose_fields(AnchorPose(0, 0, math.pi / 2),
                                         AnchorPose(0, 1, math.pi))
        assert dh == pytest.approx(math.pi / 2)
        assert az == pytest.approx(0.0, abs=1e-12)
        assert d == pytest.approx(1.0)

    @given(poses(), poses())
    @settings(max_examples=200)
    def test_distance_symmetry(self, a, b):
        assert relative_pose(a, b).distance == relative_pose(b, a).distance

    @given(poses(), poses())
    @settings(max_examples=200)
    def test_heading_antisymmetry(self, a, b):
        dh_ab, _, _ = relative_pose_fields(a, b)
        dh_ba, _, _ = relative_pose_fields(b, a)
        # Antisymmetric up to the branch point at +-pi.
        assert math.isclose(math.cos(dh_ab), math.cos(-dh_ba), abs_tol=1e-9)
        assert math.isclose(math.sin(dh_ab), math.sin(-dh_ba), abs_tol=1e-9)

    @given(poses(), poses(), poses())
    @settings(max_examples=200)
    def test_rigid_transform_invariance(self, a, b, t):
        before = relative_pose(a, b).as_array()
        after = relative_pose(apply_rigid_transform(a, t),
                              apply_rigid_transform(b, t)).as_array()
        np.testing.assert_allclose(after, before, atol=1e-9)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(0)
        src = AnchorPose(1.0, 2.0, 0.3)
        dsts = [AnchorPose(*rng.uniform(-10, 10, 2), rng.uniform(-3, 3))
                for _ in range(20)]
        batch = relative_pose_batch(np.array([src.x, src.y, src.heading]),
                                    np.array([[d.x, d.y, d.heading] for d in dsts]))
        for row, d in zip(batch, dsts):
            np.testing.assert_allclose(row, relative_pose(src, d).as_array(),
                                       atol=1e-12)


class TestRigidTransform:
    def test_identity(self):
        p = AnchorPose(1.0, 2.0, 0.5)
        q = apply_rigid_transform(p, AnchorPose(0, 0, 0))
        assert (q.x, q.y, q.heading) == (p.x, p.y, p.heading)

    def test_translation(self):
        q = apply_rigid_transform(AnchorPose(0, 0, 0), AnchorPose(1, 0, 0))
        assert (q.x, q.y) == (1.0, 0.0)

    def test_rotation_involution(self):
        p = AnchorPose(2.0, -1.0, 0.25)
        t = AnchorPose(0, 0, math.pi)
        q = apply_rigid_transform(apply_rigid_transform(p, t), t)
        assert q.x == pytest.approx(p.x, abs=1e-12)
        assert q.y == pytest.approx(p.y, abs=1e-12)
        assert q.heading == pytest.approx(p.heading, abs=1e-12)

    def test_local_global_roundtrip(self):
        rng = np.random.default_rng(1)
        pose = AnchorPose(3.0, -4.0, 1.1)
        pts = rng.uniform(-5, 5, (10, 2))
        np.testing.assert_allclose(pose.to_global(pose.to_local(pts)), pts,
                                   atol=1e-12)
