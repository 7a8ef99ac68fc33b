"""Trajectory file format: save/load round trips and validation."""

import numpy as np
import pytest

from sunvo import Pose, Rotation
from sunvo.pipeline import Trajectory
from sunvo.trajio import TrajectoryFileError, load_trajectory, save_trajectory

from conftest import random_rotation


def _trajectory(n=6, seed=0):
    rng = np.random.default_rng(seed)
    poses = [Pose.identity()]
    for _ in range(n - 1):
        poses.append(Pose(random_rotation(rng, max_angle=2.0), rng.uniform(-30, 30, 3)))
    return Trajectory(tuple(poses), tuple(0.1 * k for k in range(n)))


class TestRoundTrip:
    def test_values_survive(self, tmp_path):
        traj = _trajectory()
        path = tmp_path / "traj.txt"
        save_trajectory(traj, path)
        back = load_trajectory(path)
        assert len(back) == len(traj)
        assert back.timestamps == traj.timestamps
        for a, b in zip(back.poses, traj.poses):
            assert np.array_equal(a.translation, b.translation)
            assert a.rotation.angle_to(b.rotation) < 1e-12

    def test_save_is_deterministic(self, tmp_path):
        traj = _trajectory(seed=3)
        p1 = tmp_path / "a.txt"
        p2 = tmp_path / "b.txt"
        save_trajectory(traj, p1)
        save_trajectory(traj, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_double_round_trip_is_stable(self, tmp_path):
        traj = _trajectory(seed=3)
        p1 = tmp_path / "a.txt"
        p2 = tmp_path / "b.txt"
        save_trajectory(traj, p1)
        once = load_trajectory(p1)
        save_trajectory(once, p2)
        twice = load_trajectory(p2)
        for a, b in zip(once.poses, twice.poses):
            assert np.array_equal(a.translation, b.translation)
            assert a.rotation.angle_to(b.rotation) < 1e-14

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text(
            "# header\n\n0 0.0 0.0 0.0 0.0 1.0 0.0 0.0 0.0  # inline\n"
            "1 0.1 1.0 2.0 3.0 1.0 0.0 0.0 0.0\n"
        )
        traj = load_trajectory(path)
        assert len(traj) == 2
        np.testing.assert_array_equal(traj.poses[1].translation, [1.0, 2.0, 3.0])


class TestValidation:
    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 0.0 0.0 0.0 0.0 1.0 0.0 0.0\n")
        with pytest.raises(TrajectoryFileError, match="9 fields"):
            load_trajectory(path)

    def test_non_sequential_frames(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(
            "0 0.0 0.0 0.0 0.0 1.0 0.0 0.0 0.0\n"
            "2 0.1 0.0 0.0 0.0 1.0 0.0 0.0 0.0\n"
        )
        with pytest.raises(TrajectoryFileError, match="expected frame 1"):
            load_trajectory(path)

    def test_bad_quaternion_norm(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 0.0 0.0 0.0 0.0 1.1 0.0 0.0 0.0\n")
        with pytest.raises(TrajectoryFileError, match="quaternion norm"):
            load_trajectory(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# just a header\n")
        with pytest.raises(TrajectoryFileError, match="no trajectory rows"):
            load_trajectory(path)

    def test_unparseable_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 0.0 x 0.0 0.0 1.0 0.0 0.0 0.0\n")
        with pytest.raises(TrajectoryFileError):
            load_trajectory(path)

    def test_non_increasing_timestamps(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(
            "0 0.5 0.0 0.0 0.0 1.0 0.0 0.0 0.0\n"
            "1 0.5 0.0 0.0 0.0 1.0 0.0 0.0 0.0\n"
        )
        with pytest.raises(TrajectoryFileError):
            load_trajectory(path)
