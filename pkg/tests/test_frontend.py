"""Frontend: three-point alignment and RANSAC interframe initialization."""

import math

import numpy as np
import pytest

from sunvo import (
    DegenerateSampleError,
    InitializationError,
    Pose,
    RansacConfig,
    Rotation,
    StereoIntrinsics,
    align_three_points,
    project,
    ransac_interframe,
    triangulate,
)
from sunvo.tracks import SyntheticWorldConfig, TrackTable, TrajectorySegment, generate_synthetic

from conftest import random_pose


class TestAlignThreePoints:
    def test_identity(self):
        src = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 2.0], [0.0, 1.0, 3.0]])
        pose = align_three_points(src, src)
        np.testing.assert_allclose(pose.rotation.matrix, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(pose.translation, np.zeros(3), atol=1e-12)

    def test_exact_recovery(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            truth = random_pose(rng)
            src = rng.uniform(-3.0, 3.0, size=(3, 3))
            dst = src @ truth.rotation.matrix.T + truth.translation
            pose = align_three_points(src, dst)
            np.testing.assert_allclose(pose.rotation.matrix, truth.rotation.matrix, atol=1e-9)
            np.testing.assert_allclose(pose.translation, truth.translation, atol=1e-9)

    def test_collinear_raises(self):
        src = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0], [0.0, 0.0, 3.0]])
        with pytest.raises(DegenerateSampleError):
            align_three_points(src, src)


def _scene(seed, k, *, outliers=0.0, noise=0.0, n=80, depth=(2.0, 8.0), step=0.2, yaw=0.5):
    cfg = SyntheticWorldConfig(
        segments=(TrajectorySegment(1, step, yaw),),
        n_landmarks=n,
        depth_range=depth,
        pixel_noise=noise,
        outlier_fraction=outliers,
        seed=seed,
    )
    return generate_synthetic(cfg, k)


def _truth_interframe(table):
    tw = table.truth_poses
    return tw[1].inverse() @ tw[0]


class TestRansacInterframe:
    def test_noiseless_recovers_truth(self, k_rig):
        table = _scene(3, k_rig)
        cfg = RansacConfig(iterations=50, threshold_px=2.0, min_inliers=6, seed=3)
        pose, inliers = ransac_interframe(table, 0, k_rig, cfg)
        truth = _truth_interframe(table)
        assert np.linalg.norm(pose.translation - truth.translation) < 1e-9
        assert pose.rotation.angle_to(truth.rotation) < 1e-9
        assert sorted(inliers) == table.common_tracks(0, 1)

    def test_too_few_common_tracks(self, k_rig):
        table = _scene(4, k_rig)
        ids = table.common_tracks(0, 1)[:2]
        small = TrackTable(
            {tid: table.tracks[tid] for tid in ids}, table.n_frames
        )
        cfg = RansacConfig(iterations=50, threshold_px=2.0, min_inliers=6, seed=0)
        with pytest.raises(InitializationError):
            ransac_interframe(small, 0, k_rig, cfg)

    def test_no_model_reaches_min_inliers(self, k_rig):
        table = _scene(5, k_rig, noise=1.0)
        cfg = RansacConfig(iterations=20, threshold_px=1e-9, min_inliers=6, seed=0)
        with pytest.raises(InitializationError):
            ransac_interframe(table, 0, k_rig, cfg)

    def test_deterministic(self, k_rig):
        table = _scene(6, k_rig, outliers=0.2, noise=0.5)
        cfg = RansacConfig(iterations=100, threshold_px=2.0, min_inliers=6, seed=11)
        pose_a, inl_a = ransac_interframe(table, 0, k_rig, cfg)
        pose_b, inl_b = ransac_interframe(table, 0, k_rig, cfg)
        assert np.array_equal(pose_a.rotation.matrix, pose_b.rotation.matrix)
        assert np.array_equal(pose_a.translation, pose_b.translation)
        assert inl_a == inl_b

    def test_permutation_invariance(self, k_rig):
        # Reordering the track dict must not change the result: sampling
        # indexes into the sorted id list.
        table = _scene(7, k_rig, outliers=0.2, noise=0.5)
        shuffled = TrackTable(
            dict(reversed(list(table.tracks.items()))), table.n_frames
        )
        cfg = RansacConfig(iterations=100, threshold_px=2.0, min_inliers=6, seed=5)
        pose_a, inl_a = ransac_interframe(table, 0, k_rig, cfg)
        pose_b, inl_b = ransac_interframe(shuffled, 0, k_rig, cfg)
        assert np.array_equal(pose_a.rotation.matrix, pose_b.rotation.matrix)
        assert np.array_equal(pose_a.translation, pose_b.translation)
        assert inl_a == inl_b

    def test_labels_consistent_with_returned_pose(self, k_rig):
        table = _scene(8, k_rig, outliers=0.3, noise=0.5)
        cfg = RansacConfig(iterations=200, threshold_px=2.0, min_inliers=6, seed=8)
        pose, inliers = ransac_interframe(table, 0, k_rig, cfg)
        within = set()
        exceeded = 0
        for tid in table.common_tracks(0, 1):
            obs0 = table.observation(tid, 0)
            if obs0.d <= 0.1 or table.observation(tid, 1).d <= 0.1:
                continue
            p1 = pose.apply(triangulate(k_rig, obs0.uvd))
            if p1[2] <= 1e-6:
                exceeded += 1
                continue
            err = np.linalg.norm(project(k_rig, p1) - table.observation(tid, 1).uvd)
            if err <= cfg.threshold_px:
                within.add(tid)
            else:
                exceeded += 1
        assert set(inliers) == within
        assert exceeded > 0  # 30% outliers guarantee some rejections


class TestRansacMonteCarlo:
    def test_outlier_robustness(self):
        # 100 seeded trials at 30% outliers, sigma 0.5 px, 200 iterations.
        # True inliers are the tracks whose frame-1 reprojection under the
        # ground-truth motion stays within the threshold.
        k = StereoIntrinsics(fu=800.0, fv=800.0, cu=320.0, cv=240.0, baseline_m=2.5)
        err_t, err_r, retention = [], [], []
        for seed in range(100):
            table = _scene(seed, k, outliers=0.3, noise=0.5, n=400,
                           depth=(1.5, 5.0), step=0.15, yaw=0.3)
            truth = _truth_interframe(table)
            ids = table.common_tracks(0, 1)
            y0 = np.array([table.observation(t, 0).uvd for t in ids])
            y1 = np.array([table.observation(t, 1).uvd for t in ids])
            pred = triangulate(k, y0) @ truth.rotation.matrix.T + truth.translation
            errs = np.linalg.norm(project(k, pred) - y1, axis=1)
            true_inliers = {t for t, e in zip(ids, errs) if e <= 2.0}

            cfg = RansacConfig(iterations=200, threshold_px=2.0, min_inliers=6, seed=seed)
            pose, inliers = ransac_interframe(table, 0, k, cfg)
            err_t.append(np.linalg.norm(pose.translation - truth.translation))
            err_r.append(pose.rotation.angle_to(truth.rotation))
            retention.append(len(true_inliers & set(inliers)) / len(true_inliers))
        assert np.mean(err_t) < 0.01
        assert np.mean(err_r) < 0.001
        assert np.mean(retention) >= 0.95
