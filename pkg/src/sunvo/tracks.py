"""Keypoint track production and ingestion.

Two sources of tracks: a synthetic scene/trajectory generator (a stand-in
for a feature tracker running on real imagery) and a line-oriented text
format for externally supplied tracks and sun detections.

Track file format, whitespace separated, ``#`` comments, UTF-8:

    frame_id landmark_id u v d

Sun detection file format (camera-frame unit vector, diagonal covariance):

    frame_id sx sy sz r11 r22 r33
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import StereoIntrinsics, StereoObservation, project
from .geometry import Pose, level_camera_pose
from .sun import SunMeasurement

__all__ = [
    "TrackFileError",
    "InfeasibleSceneError",
    "TrajectorySegment",
    "SyntheticWorldConfig",
    "TrackTable",
    "generate_synthetic",
    "save_tracks",
    "load_tracks",
    "save_sun_detections",
    "load_sun_detections",
]

# A landmark must be at least this far in front of a camera to be visible.
_MIN_VISIBLE_DEPTH = 0.5
# Keep spawned landmarks away from the image border by this margin (px).
_SPAWN_MARGIN = 10.0


class TrackFileError(ValueError):
    """Malformed track or detection file; message includes the line number."""


class InfeasibleSceneError(RuntimeError):
    """Synthetic scene left some frame with no visible landmarks."""


@dataclass(frozen=True)
class TrajectorySegment:
    """A constant-curvature driving segment: per-frame step and yaw rate."""

    frames: int
    step_m: float
    yaw_rate_deg: float = 0.0

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("segment must cover at least 1 frame step")


@dataclass(frozen=True)
class SyntheticWorldConfig:
    """Recipe for a synthetic driving scene.

    The camera stays level; heading integrates the segment yaw rates and the
    position advances ``step_m`` along the heading each frame.  Landmarks are
    spawned inside the viewing frustum of their anchor frame at a uniform
    depth and live for a uniform random number of frames.
    """

    segments: tuple[TrajectorySegment, ...]
    n_landmarks: int = 400
    depth_range: tuple[float, float] = (4.0, 40.0)
    pixel_noise: float = 0.0
    outlier_fraction: float = 0.0
    sun_world: tuple[float, float, float] | None = None
    seed: int = 0
    track_length: tuple[int, int] = (8, 16)
    start_heading_deg: float = 0.0
    start_position: tuple[float, float, float] = (0.0, 0.0, 1.6)

    def __post_init__(self):
        if isinstance(self.segments, list):
            object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("need at least one trajectory segment")
        if self.pixel_noise < 0.0:
            raise ValueError("pixel noise must be >= 0")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier fraction must be in [0, 1)")
        if self.n_landmarks < 10:
            raise ValueError("need at least 10 landmarks")
        lo, hi = self.track_length
        if lo < 2 or hi < lo:
            raise ValueError("track_length must satisfy 2 <= lo <= hi")
        if self.depth_range[0] <= _MIN_VISIBLE_DEPTH or self.depth_range[1] < self.depth_range[0]:
            raise ValueError("depth range must be increasing and > 0.5 m")
        if self.sun_world is not None:
            v = np.asarray(self.sun_world, dtype=float)
            if abs(float(np.linalg.norm(v)) - 1.0) > 1e-3:
                raise ValueError("sun_world must be a unit vector")

    @property
    def n_frames(self) -> int:
        return 1 + sum(s.frames for s in self.segments)


class TrackTable:
    """Observations grouped by landmark id, plus optional ground truth.

    ``tracks`` maps landmark id -> list of (frame index, StereoObservation)
    sorted by frame; a landmark appears at most once per frame.  Ground-truth
    poses are world-from-camera (``T_world_cam``); landmark positions are in
    the world frame.  File-loaded tables carry no ground truth.
    """

    def __init__(
        self,
        tracks: dict[int, list[tuple[int, StereoObservation]]],
        n_frames: int,
        truth_poses: list[Pose] | None = None,
        truth_landmarks: dict[int, np.ndarray] | None = None,
        sun_world: np.ndarray | None = None,
    ):
        for tid, obs_list in tracks.items():
            frames = [f for f, _ in obs_list]
            if any(f < 0 or f >= n_frames for f in frames):
                raise ValueError(f"track {tid} has a frame index outside [0, {n_frames})")
            if len(set(frames)) != len(frames):
                raise ValueError(f"track {tid} observes some frame more than once")
            if frames != sorted(frames):
                tracks[tid] = sorted(obs_list, key=lambda fo: fo[0])
        if truth_poses is not None and len(truth_poses) != n_frames:
            raise ValueError("ground-truth pose count must equal frame count")
        self.tracks = tracks
        self.n_frames = n_frames
        self.truth_poses = truth_poses
        self.truth_landmarks = truth_landmarks
        self.sun_world = None if sun_world is None else np.asarray(sun_world, dtype=float)
        self._frame_index: dict[int, dict[int, StereoObservation]] = {}
        for tid, obs_list in tracks.items():
            for f, obs in obs_list:
                self._frame_index.setdefault(f, {})[tid] = obs

    def observations_in_frame(self, frame: int) -> dict[int, StereoObservation]:
        return self._frame_index.get(frame, {})

    def common_tracks(self, frame_a: int, frame_b: int) -> list[int]:
        """Sorted ids of tracks observed in both frames."""
        a = self._frame_index.get(frame_a, {})
        b = self._frame_index.get(frame_b, {})
        return sorted(a.keys() & b.keys())

    def observation(self, track_id: int, frame: int) -> StereoObservation:
        return self._frame_index[frame][track_id]

    def n_observations(self) -> int:
        return sum(len(v) for v in self.tracks.values())

    def observations_equal(self, other: "TrackTable") -> bool:
        """True when the serialized content (ids, frames, u/v/d) matches."""
        if self.n_frames != other.n_frames or self.tracks.keys() != other.tracks.keys():
            return False
        for tid, obs_list in self.tracks.items():
            other_list = other.tracks[tid]
            if len(obs_list) != len(other_list):
                return False
            for (f1, o1), (f2, o2) in zip(obs_list, other_list):
                if f1 != f2 or o1.u != o2.u or o1.v != o2.v or o1.d != o2.d:
                    return False
        return True


def _truth_trajectory(cfg: SyntheticWorldConfig) -> list[Pose]:
    heading = math.radians(cfg.start_heading_deg)
    position = np.asarray(cfg.start_position, dtype=float)
    poses = [level_camera_pose(heading, position)]
    for seg in cfg.segments:
        yaw_step = math.radians(seg.yaw_rate_deg)
        for _ in range(seg.frames):
            heading += yaw_step
            position = position + seg.step_m * np.array(
                [math.sin(heading), math.cos(heading), 0.0]
            )
            poses.append(level_camera_pose(heading, position))
    return poses


def generate_synthetic(cfg: SyntheticWorldConfig, k: StereoIntrinsics) -> TrackTable:
    """Generate a deterministic synthetic track table with ground truth.

    Observations are exact projections of world landmarks plus Gaussian pixel
    noise.  A configurable fraction of tracks are outliers: from their second
    frame onward they report the projections of a different landmark (a
    wrong but internally consistent association).
    """
    rng = np.random.default_rng(cfg.seed)
    poses = _truth_trajectory(cfg)
    n_frames = len(poses)
    if n_frames < 2:
        raise ValueError("trajectory must cover at least 2 frames")
    inv_poses = [p.inverse() for p in poses]

    n = cfg.n_landmarks
    # Stratify virtual spawn times over a timeline that starts one maximum
    # lifetime before frame 0, so frame 0 already sees a steady-state track
    # population instead of only the tracks spawned exactly there.
    head = cfg.track_length[1] - 1
    span = n_frames - 1 + head
    spawns = (np.arange(n) * span) // n - head
    anchors = np.clip(spawns, 0, n_frames - 2)
    lifetimes = rng.integers(cfg.track_length[0], cfg.track_length[1] + 1, size=n)
    # Spawn each landmark inside its anchor frame's frustum.
    us = rng.uniform(_SPAWN_MARGIN, k.width - _SPAWN_MARGIN, size=n)
    vs = rng.uniform(_SPAWN_MARGIN, k.height - _SPAWN_MARGIN, size=n)
    zs = rng.uniform(cfg.depth_range[0], cfg.depth_range[1], size=n)

    landmarks_world: dict[int, np.ndarray] = {}
    for i in range(n):
        p_cam = np.array(
            [(us[i] - k.cu) * zs[i] / k.fu, (vs[i] - k.cv) * zs[i] / k.fv, zs[i]]
        )
        landmarks_world[i] = poses[anchors[i]].apply(p_cam)

    n_outliers = int(math.floor(cfg.outlier_fraction * n))
    outlier_ids = set(rng.choice(n, size=n_outliers, replace=False).tolist()) if n_outliers else set()
    partners = {}
    for i in sorted(outlier_ids):
        j = int(rng.integers(0, n - 1))
        partners[i] = j if j < i else j + 1  # any landmark other than itself

    tracks: dict[int, list[tuple[int, StereoObservation]]] = {}
    for i in range(n):
        first = int(anchors[i])
        last = min(int(spawns[i]) + int(lifetimes[i]), n_frames)
        obs_list: list[tuple[int, StereoObservation]] = []
        for f in range(first, last):
            source = i
            if i in outlier_ids and f > first:
                source = partners[i]
            p_cam = inv_poses[f].apply(landmarks_world[source])
            if p_cam[2] <= _MIN_VISIBLE_DEPTH:
                continue
            uvd = project(k, p_cam)
            if not (0.0 <= uvd[0] <= k.width and 0.0 <= uvd[1] <= k.height):
                continue
            if cfg.pixel_noise > 0.0:
                uvd = uvd + cfg.pixel_noise * rng.standard_normal(3)
                if uvd[2] <= 0.0:
                    continue
            obs_list.append((f, StereoObservation(uvd[0], uvd[1], uvd[2])))
        if obs_list:
            tracks[i] = obs_list

    seen_frames = {f for obs_list in tracks.values() for f, _ in obs_list}
    for f in range(n_frames):
        if f not in seen_frames:
            raise InfeasibleSceneError(f"no visible landmarks in frame {f}")

    sun_world = None if cfg.sun_world is None else np.asarray(cfg.sun_world, dtype=float)
    return TrackTable(tracks, n_frames, poses, landmarks_world, sun_world)


def save_tracks(table: TrackTable, path) -> None:
    """Write the observation content in the track file format.

    Ground truth is not part of the interchange format and is not written.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write("# frame_id landmark_id u v d\n")
        rows = []
        for tid in sorted(table.tracks):
            for frame, obs in table.tracks[tid]:
                rows.append((frame, tid, obs))
        rows.sort(key=lambda r: (r[0], r[1]))
        for frame, tid, obs in rows:
            f.write(
                f"{frame} {tid} {float(obs.u)!r} {float(obs.v)!r} {float(obs.d)!r}\n"
            )


def _data_lines(path):
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def load_tracks(path) -> TrackTable:
    """Parse a track file; raises TrackFileError with the offending line."""
    tracks: dict[int, list[tuple[int, StereoObservation]]] = {}
    seen: set[tuple[int, int]] = set()
    max_frame = -1
    for lineno, tokens in _data_lines(path):
        if len(tokens) != 5:
            raise TrackFileError(
                f"{path}:{lineno}: expected 5 fields (frame_id landmark_id u v d), got {len(tokens)}"
            )
        try:
            frame, tid = int(tokens[0]), int(tokens[1])
            u, v, d = (float(t) for t in tokens[2:])
        except ValueError as exc:
            raise TrackFileError(f"{path}:{lineno}: {exc}") from exc
        if frame < 0 or tid < 0:
            raise TrackFileError(f"{path}:{lineno}: negative frame or landmark id")
        if not all(math.isfinite(x) for x in (u, v, d)):
            raise TrackFileError(f"{path}:{lineno}: non-finite observation")
        if d <= 0.0:
            raise TrackFileError(f"{path}:{lineno}: disparity must be positive")
        if (frame, tid) in seen:
            raise TrackFileError(
                f"{path}:{lineno}: duplicate observation of landmark {tid} in frame {frame}"
            )
        seen.add((frame, tid))
        tracks.setdefault(tid, []).append((frame, StereoObservation(u, v, d)))
        max_frame = max(max_frame, frame)
    return TrackTable(tracks, max_frame + 1)


def save_sun_detections(detections: list[tuple[int, SunMeasurement]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# frame_id sx sy sz r11 r22 r33\n")
        for frame, m in sorted(detections, key=lambda fm: fm[0]):
            d = [float(x) for x in m.direction]
            r = [float(x) for x in np.diag(m.cov)]
            f.write(
                f"{frame} {d[0]!r} {d[1]!r} {d[2]!r} {r[0]!r} {r[1]!r} {r[2]!r}\n"
            )


def load_sun_detections(path) -> list[tuple[int, SunMeasurement]]:
    """Parse a sun detection file into (frame, measurement) pairs."""
    out: list[tuple[int, SunMeasurement]] = []
    seen: set[int] = set()
    for lineno, tokens in _data_lines(path):
        if len(tokens) != 7:
            raise TrackFileError(
                f"{path}:{lineno}: expected 7 fields (frame_id sx sy sz r11 r22 r33), got {len(tokens)}"
            )
        try:
            frame = int(tokens[0])
            vals = [float(t) for t in tokens[1:]]
        except ValueError as exc:
            raise TrackFileError(f"{path}:{lineno}: {exc}") from exc
        if frame < 0:
            raise TrackFileError(f"{path}:{lineno}: negative frame index")
        direction = np.array(vals[:3])
        variances = vals[3:]
        if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-3:
            raise TrackFileError(
                f"{path}:{lineno}: sun direction norm off unit by more than 1e-3"
            )
        if any(v <= 0.0 or not math.isfinite(v) for v in variances):
            raise TrackFileError(f"{path}:{lineno}: variances must be positive")
        if frame in seen:
            raise TrackFileError(f"{path}:{lineno}: duplicate detection for frame {frame}")
        seen.add(frame)
        out.append((frame, SunMeasurement(direction, np.diag(variances), frame, "file")))
    return out
