"""Geometry: SE(3)/SO(3) operations, sky angles, frame conventions."""

import math

import numpy as np
import pytest

from sunvo import (
    AzZen,
    LogMapSingularError,
    Pose,
    Rotation,
    azzen_from_unitvec,
    level_camera_pose,
    se3_exp,
    se3_log,
    transform_point,
    unitvec_from_azzen,
)
from sunvo.geometry import (
    matrix_from_quat,
    quat_from_matrix,
    rotation_angle,
    skew,
    so3_exp,
    so3_log,
)

from conftest import random_pose, random_rotation


class TestTransformPoint:
    def test_identity(self):
        p = transform_point(Pose.identity(), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(p, [1.0, 2.0, 3.0])

    def test_z_rotation(self):
        t = Pose(Rotation.about_z(math.pi / 2), np.zeros(3))
        p = transform_point(t, np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(p, [0.0, 1.0, 0.0], atol=1e-12)

    def test_pure_translation(self):
        t = Pose(Rotation.identity(), np.array([1.0, 2.0, 3.0]))
        p = transform_point(t, np.zeros(3))
        np.testing.assert_allclose(p, [1.0, 2.0, 3.0])


class TestSe3ExpLog:
    def test_exp_zero_is_identity(self):
        t = se3_exp(np.zeros(6))
        np.testing.assert_allclose(t.rotation.matrix, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(t.translation, np.zeros(3), atol=1e-15)

    def test_exp_pure_z_rotation(self):
        # Rodrigues by hand: phi = (0, 0, pi/2) gives a 90 degree z-rotation.
        t = se3_exp(np.array([0.0, 0.0, math.pi / 2, 0.0, 0.0, 0.0]))
        expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(t.rotation.matrix, expected, atol=1e-12)
        np.testing.assert_allclose(t.translation, np.zeros(3), atol=1e-15)

    def test_round_trip_fixed(self):
        xi = np.array([0.1, -0.2, 0.3, 1.0, 2.0, 3.0])
        np.testing.assert_allclose(se3_log(se3_exp(xi)), xi, atol=1e-10)

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            phi = rng.uniform(0.0, 3.0) * axis
            rho = rng.uniform(-10.0, 10.0, size=3)
            xi = np.concatenate([phi, rho])
            np.testing.assert_allclose(se3_log(se3_exp(xi)), xi, atol=1e-9)

    def test_log_near_pi_raises(self):
        t = Pose(Rotation.about_z(math.pi - 1e-8), np.zeros(3))
        with pytest.raises(LogMapSingularError):
            se3_log(t)


class TestSo3:
    def test_exp_zero(self):
        np.testing.assert_allclose(so3_exp(np.zeros(3)), np.eye(3), atol=1e-15)

    def test_log_identity(self):
        np.testing.assert_allclose(so3_log(np.eye(3)), np.zeros(3), atol=1e-15)

    def test_rotation_angle(self):
        assert rotation_angle(Rotation.about_z(0.7).matrix) == pytest.approx(0.7)

    def test_skew_is_cross(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a, b = rng.standard_normal(3), rng.standard_normal(3)
            np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-12)


class TestAzZen:
    def test_north_horizon(self):
        v = unitvec_from_azzen(AzZen(0.0, math.pi / 2))
        np.testing.assert_allclose(v, [0.0, 1.0, 0.0], atol=1e-15)

    def test_east_horizon(self):
        v = unitvec_from_azzen(AzZen(math.pi / 2, math.pi / 2))
        np.testing.assert_allclose(v, [1.0, 0.0, 0.0], atol=1e-15)

    def test_zenith_is_up(self):
        v = unitvec_from_azzen(AzZen(1.234, 0.0))
        np.testing.assert_allclose(v, [0.0, 0.0, 1.0], atol=1e-15)

    def test_up_vector_is_degenerate(self):
        angles, degenerate = azzen_from_unitvec(np.array([0.0, 0.0, 1.0]))
        assert degenerate
        assert angles.azimuth == 0.0
        assert angles.zenith == pytest.approx(0.0, abs=1e-12)

    def test_azimuth_wraps(self):
        assert AzZen(2 * math.pi + 0.3, 1.0).azimuth == pytest.approx(0.3)

    def test_zenith_range_enforced(self):
        with pytest.raises(ValueError):
            AzZen(0.0, math.pi + 0.1)

    def test_elevation(self):
        assert AzZen(0.0, math.pi / 3).elevation == pytest.approx(math.pi / 6)

    def test_round_trip_random(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            a = AzZen(rng.uniform(0.0, 2 * math.pi), rng.uniform(0.01, math.pi - 0.01))
            back, degenerate = azzen_from_unitvec(unitvec_from_azzen(a))
            assert not degenerate
            daz = (back.azimuth - a.azimuth + math.pi) % (2 * math.pi) - math.pi
            assert abs(daz) < 1e-12
            assert abs(back.zenith - a.zenith) < 1e-12

    def test_vector_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            v = rng.standard_normal(3)
            v /= np.linalg.norm(v)
            angles, degenerate = azzen_from_unitvec(v)
            if degenerate:
                continue
            np.testing.assert_allclose(unitvec_from_azzen(angles), v, atol=1e-12)


class TestRotation:
    def test_orthonormality(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            m = random_rotation(rng).matrix
            np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-9)
            assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-9)

    def test_from_matrix_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Rotation.from_matrix(np.eye(3) * 1.1)

    def test_angle_to(self):
        a = Rotation.about_z(0.2)
        b = Rotation.about_z(0.5)
        assert a.angle_to(b) == pytest.approx(0.3, abs=1e-12)

    def test_renormalized(self):
        rng = np.random.default_rng(5)
        m = random_rotation(rng).matrix + 1e-10 * rng.standard_normal((3, 3))
        r = Rotation(m, _trusted=True).renormalized()
        np.testing.assert_allclose(r.matrix @ r.matrix.T, np.eye(3), atol=1e-12)


class TestPose:
    def test_compose_inverse_is_identity(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            t = random_pose(rng)
            ident = t.compose(t.inverse())
            np.testing.assert_allclose(ident.rotation.matrix, np.eye(3), atol=1e-9)
            np.testing.assert_allclose(ident.translation, np.zeros(3), atol=1e-9)

    def test_compose_associative(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a, b, c = (random_pose(rng) for _ in range(3))
            left = (a @ b) @ c
            right = a @ (b @ c)
            np.testing.assert_allclose(left.rotation.matrix, right.rotation.matrix, atol=1e-9)
            np.testing.assert_allclose(left.translation, right.translation, atol=1e-9)

    def test_double_inverse(self):
        rng = np.random.default_rng(8)
        t = random_pose(rng)
        back = t.inverse().inverse()
        np.testing.assert_allclose(back.rotation.matrix, t.rotation.matrix, atol=1e-12)
        np.testing.assert_allclose(back.translation, t.translation, atol=1e-12)

    def test_apply_matches_matrix(self):
        rng = np.random.default_rng(9)
        t = random_pose(rng)
        p = rng.standard_normal(3)
        np.testing.assert_allclose(t.apply(p), t.rotation.matrix @ p + t.translation)


class TestQuaternion:
    def test_round_trip(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            m = random_rotation(rng).matrix
            q = quat_from_matrix(m)
            assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(matrix_from_quat(q), m, atol=1e-12)


class TestLevelCameraPose:
    def test_heading_north(self):
        t = level_camera_pose(0.0, np.array([1.0, 2.0, 3.0]))
        # Optical axis points North, camera up is world up.
        np.testing.assert_allclose(t.apply([0, 0, 1]) - t.translation, [0, 1, 0], atol=1e-15)
        np.testing.assert_allclose(t.apply([0, -1, 0]) - t.translation, [0, 0, 1], atol=1e-15)

    def test_heading_east(self):
        t = level_camera_pose(math.pi / 2, np.zeros(3))
        np.testing.assert_allclose(t.apply([0, 0, 1]), [1, 0, 0], atol=1e-12)

    def test_orthonormal(self):
        m = level_camera_pose(0.77, np.zeros(3)).rotation.matrix
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
