"""Camera: stereo projection, triangulation, and the projection Jacobian."""

import numpy as np
import pytest

from sunvo import (
    BehindCameraError,
    NearInfiniteDepthError,
    StereoObservation,
    project,
    project_jacobian,
    triangulate,
)


class TestProject:
    def test_hand_example(self, k_hand):
        # u = 100*1/2 + 50, v = 100*1/2 + 50, d = 100*0.5/2.
        uvd = project(k_hand, np.array([1.0, 1.0, 2.0]))
        np.testing.assert_allclose(uvd, [100.0, 100.0, 25.0])

    def test_optical_axis(self, k_hand):
        for z in (1.0, 2.0, 10.0):
            uvd = project(k_hand, np.array([0.0, 0.0, z]))
            np.testing.assert_allclose(uvd, [50.0, 50.0, 100.0 * 0.5 / z])

    def test_behind_camera(self, k_hand):
        with pytest.raises(BehindCameraError):
            project(k_hand, np.array([0.0, 0.0, -1.0]))
        with pytest.raises(BehindCameraError):
            project(k_hand, np.array([0.0, 0.0, 0.0]))

    def test_disparity_positive(self, k_hand):
        rng = np.random.default_rng(0)
        pts = rng.uniform([-5, -5, 0.01], [5, 5, 100], size=(200, 3))
        assert np.all(project(k_hand, pts)[:, 2] > 0.0)

    def test_batch_matches_single(self, k_hand):
        rng = np.random.default_rng(1)
        pts = rng.uniform([-2, -2, 1], [2, 2, 20], size=(50, 3))
        batch = project(k_hand, pts)
        for i, p in enumerate(pts):
            np.testing.assert_allclose(batch[i], project(k_hand, p))


class TestTriangulate:
    def test_hand_example(self, k_hand):
        p = triangulate(k_hand, np.array([100.0, 100.0, 25.0]))
        np.testing.assert_allclose(p, [1.0, 1.0, 2.0])

    def test_optical_axis(self, k_hand):
        p = triangulate(k_hand, np.array([50.0, 50.0, 10.0]))
        np.testing.assert_allclose(p, [0.0, 0.0, 100.0 * 0.5 / 10.0])

    def test_zero_disparity(self, k_hand):
        with pytest.raises(NearInfiniteDepthError):
            triangulate(k_hand, np.array([50.0, 50.0, 0.0]))

    def test_disparity_floor(self, k_hand):
        with pytest.raises(NearInfiniteDepthError):
            triangulate(k_hand, np.array([50.0, 50.0, 0.1]))

    def test_round_trip(self, k_hand):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            z = rng.uniform(1.0, 50.0)
            p = np.array([rng.uniform(-0.6, 0.6) * z, rng.uniform(-0.6, 0.6) * z, z])
            np.testing.assert_allclose(triangulate(k_hand, project(k_hand, p)), p, atol=1e-9)


class TestProjectJacobian:
    def test_optical_axis_separability(self, k_hand):
        j = project_jacobian(k_hand, np.array([0.0, 0.0, 2.0]))
        assert j[0, 1] == 0.0  # du/dy
        assert j[1, 0] == 0.0  # dv/dx

    def test_disparity_row(self, k_hand):
        rng = np.random.default_rng(3)
        pts = rng.uniform([-5, -5, 0.5], [5, 5, 40], size=(100, 3))
        j = project_jacobian(k_hand, pts)
        assert np.all(j[:, 2, 0] == 0.0)
        assert np.all(j[:, 2, 1] == 0.0)

    def test_finite_difference(self, k_hand):
        rng = np.random.default_rng(4)
        step = 1e-6
        for _ in range(1000):
            z = rng.uniform(1.0, 40.0)
            p = np.array([rng.uniform(-0.6, 0.6) * z, rng.uniform(-0.6, 0.6) * z, z])
            j = project_jacobian(k_hand, p)
            fd = np.empty((3, 3))
            for c in range(3):
                dp = np.zeros(3)
                dp[c] = step
                fd[:, c] = (project(k_hand, p + dp) - project(k_hand, p - dp)) / (2 * step)
            scale = np.maximum(np.abs(j), 1.0)
            assert np.max(np.abs(j - fd) / scale) < 1e-5

    def test_behind_camera(self, k_hand):
        with pytest.raises(BehindCameraError):
            project_jacobian(k_hand, np.array([0.0, 0.0, -2.0]))


class TestStereoObservation:
    def test_requires_positive_disparity(self):
        with pytest.raises(ValueError):
            StereoObservation(10.0, 10.0, 0.0)
        with pytest.raises(ValueError):
            StereoObservation(10.0, 10.0, -1.0)

    def test_rejects_bad_covariance(self):
        with pytest.raises(ValueError):
            StereoObservation(10.0, 10.0, 1.0, cov=np.zeros((3, 3)))
        with pytest.raises(ValueError):
            StereoObservation(10.0, 10.0, 1.0, cov=np.array([[1, 2, 0], [0, 1, 0], [0, 0, 1.0]]))

    def test_covariance_read_only(self):
        obs = StereoObservation(10.0, 10.0, 1.0)
        with pytest.raises(ValueError):
            obs.cov[0, 0] = 5.0

    def test_uvd(self):
        np.testing.assert_allclose(StereoObservation(1.0, 2.0, 3.0).uvd, [1.0, 2.0, 3.0])
