"""Trajectory file I/O.

One line per frame: ``frame t x y z qw qx qy qz`` (whitespace separated,
``#`` comments ignored).  The quaternion is the world-from-camera rotation
in w-first order; floats are written with repr so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import numpy as np

from .geometry import Pose, Rotation, matrix_from_quat, quat_from_matrix
from .pipeline import Trajectory

__all__ = ["TrajectoryFileError", "save_trajectory", "load_trajectory"]


class TrajectoryFileError(ValueError):
    """Malformed trajectory file."""


def save_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# frame t x y z qw qx qy qz\n")
        for i, (pose, t) in enumerate(zip(traj.poses, traj.timestamps)):
            x, y, z = (float(c) for c in pose.translation)
            qw, qx, qy, qz = (float(c) for c in quat_from_matrix(pose.rotation.matrix))
            f.write(
                f"{i} {float(t)!r} {x!r} {y!r} {z!r} {qw!r} {qx!r} {qy!r} {qz!r}\n"
            )


def load_trajectory(path) -> Trajectory:
    poses: list[Pose] = []
    timestamps: list[float] = []
    expected = 0
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 9:
                raise TrajectoryFileError(
                    f"{path}:{lineno}: expected 9 fields, got {len(tokens)}"
                )
            try:
                frame = int(tokens[0])
                values = [float(tok) for tok in tokens[1:]]
            except ValueError as exc:
                raise TrajectoryFileError(f"{path}:{lineno}: {exc}") from exc
            if frame != expected:
                raise TrajectoryFileError(
                    f"{path}:{lineno}: expected frame {expected}, got {frame}"
                )
            expected += 1
            t, x, y, z, qw, qx, qy, qz = values
            q = np.array([qw, qx, qy, qz])
            norm = float(np.linalg.norm(q))
            if abs(norm - 1.0) > 1e-6:
                raise TrajectoryFileError(
                    f"{path}:{lineno}: quaternion norm {norm:.9f} is not 1"
                )
            rot = Rotation.from_matrix(matrix_from_quat(q / norm))
            poses.append(Pose(rot, np.array([x, y, z])))
            timestamps.append(t)
    if not poses:
        raise TrajectoryFileError(f"{path}: no trajectory rows")
    try:
        return Trajectory(tuple(poses), tuple(timestamps))
    except ValueError as exc:
        raise TrajectoryFileError(f"{path}: {exc}") from exc
