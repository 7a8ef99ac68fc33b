"""Sliding-window stereo VO pipeline with optional sun-direction updates.

Window scheduling: window w covers frames [w, w + N - 1] with frame w as the
gauge-fixed base.  Window 0 commits every non-base frame; each later window
commits only its newest frame, so every frame is committed exactly once and
frame 0 keeps the configured world anchor bit-for-bit.

Committed poses are T_world_cam.  An optional heading disturbance (fixed
and/or random per-frame yaw) is injected into each committed pose to emulate
accumulating orientation drift; sun measurements observe the true scene, so
they pull the estimate back toward the undisturbed heading.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import triangulate
from .config import RunConfig
from .frontend import InitializationError, ransac_interframe
from .geometry import Pose, Rotation, level_camera_pose, matrix_from_quat
from .solver import SolverSingularError, WindowProblem, solve_window
from .sun import (
    EphemerisQuery,
    SunMeasurement,
    SunPrior,
    bimodal_measurement,
    camera_azzen_from_vec,
    camera_vec_from_azzen,
    gate_measurement,
    oracle_measurement,
    predict_sun,
    solar_ephemeris,
    vo_prior_disambiguate,
)
from .tracks import TrackTable, load_sun_detections

__all__ = [
    "PipelineAbort",
    "Trajectory",
    "RunStats",
    "anchor_pose",
    "run",
    "run_with_stats",
]

# Seed-stream tags keep the per-purpose RNGs independent of one another.
_TAG_BIAS = 111
_TAG_YAW = 222
_TAG_SUN = 333
_TAG_RANSAC = 444


class PipelineAbort(RuntimeError):
    """Unrecoverable failure inside the pipeline (frontend or solver)."""

    def __init__(self, message: str, frame: int | None = None, window: int | None = None):
        super().__init__(message)
        self.frame = frame
        self.window = window


@dataclass(frozen=True)
class Trajectory:
    """A world-frame camera trajectory: one T_world_cam pose per frame."""

    poses: tuple[Pose, ...]
    timestamps: tuple[float, ...]

    def __post_init__(self):
        if len(self.poses) != len(self.timestamps):
            raise ValueError("poses and timestamps must have equal length")
        if len(self.poses) == 0:
            raise ValueError("a trajectory needs at least one pose")
        ts = np.asarray(self.timestamps, dtype=float)
        if len(ts) > 1 and np.any(np.diff(ts) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses])


@dataclass
class RunStats:
    """Bookkeeping from one pipeline run."""

    windows: int = 0
    solver_iterations: int = 0
    dropped_observations: int = 0
    sun_generated: int = 0
    sun_accepted: int = 0
    sun_rejected: int = 0
    reject_reasons: dict = field(default_factory=dict)


def anchor_pose(cfg: RunConfig) -> Pose:
    """World pose of the first camera frame, from the configured anchor."""
    ip = cfg.initial_pose
    position = np.asarray(ip.position, dtype=float)
    if ip.quaternion_wxyz is not None:
        r = Rotation.from_matrix(matrix_from_quat(np.asarray(ip.quaternion_wxyz, float)))
        return Pose(r, position)
    return level_camera_pose(math.radians(ip.heading_deg), position)


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


class _SunSource:
    """Produces at most one gated measurement per cadence frame.

    Generation and gating happen the first time a frame is encountered (the
    detector fires once per frame); the outcome is cached so overlapping
    windows reuse the same decision and the counters stay exact.
    """

    def __init__(self, cfg: RunConfig, tracks: TrackTable, stats: RunStats):
        self.cfg = cfg
        self.sun = cfg.sun
        self.stats = stats
        self.tracks = tracks
        self._cache: dict[int, SunMeasurement | None] = {}

        query = EphemerisQuery(cfg.ephemeris.lat, cfg.ephemeris.lon, cfg.ephemeris.t0)
        if self.sun.world_direction is not None:
            self.sun_world = np.asarray(self.sun.world_direction, dtype=float)
            self.sun_world = self.sun_world / np.linalg.norm(self.sun_world)
        else:
            self.sun_world = solar_ephemeris(query)
        # Simulated detectors observe the scene that generated the tracks.
        self.sun_world_true = (
            tracks.sun_world if tracks.sun_world is not None else self.sun_world
        )

        if self.sun.source in ("oracle", "bimodal") and not tracks.truth_poses:
            raise ValueError(
                f"sun.source {self.sun.source!r} needs ground-truth poses in the track table"
            )
        self.detections: dict[int, SunMeasurement] = {}
        if self.sun.source == "file":
            self.detections = dict(load_sun_detections(self.sun.detections_path))

        duration = (tracks.n_frames - 1) / cfg.frame_rate_hz
        if duration > self.sun.static_limit_s:
            warnings.warn(
                f"run spans {duration:.0f} s with a static sun direction; "
                f"ephemeris motion is not modeled beyond {self.sun.static_limit_s:.0f} s",
                stacklevel=3,
            )

    def measurement(
        self, frame: int, predicted: np.ndarray, yaw_dir: np.ndarray | None
    ) -> SunMeasurement | None:
        """Gated measurement for a cadence frame, or None.

        ``yaw_dir`` is the camera-frame direction the predicted sun moves
        under a world-heading perturbation (normalized R_cam_world (z x s)).
        """
        if frame in self._cache:
            return self._cache[frame]
        raw = self._generate(frame, predicted)
        if raw is None:
            self._cache[frame] = None
            return None
        self.stats.sun_generated += 1
        accepted, reason = gate_measurement(
            raw, predicted, self.sun.cos_gate, self.sun.y_gate
        )
        if not accepted:
            self.stats.sun_rejected += 1
            self.stats.reject_reasons[reason] = self.stats.reject_reasons.get(reason, 0) + 1
            self._cache[frame] = None
            return None
        self.stats.sun_accepted += 1
        if self.sun.weight_sigma_deg is not None and yaw_dir is not None:
            # Heading-targeted solver weight: confident along the residual
            # direction that a world-heading error produces, honest
            # everywhere else.  Pitch and roll are already well constrained
            # by the reprojection terms, so pulling them toward a noisy
            # measurement only injects error; heading is where VO drifts.
            var_t = math.radians(self.sun.weight_sigma_deg) ** 2
            var_o = float(raw.cov[1, 1])
            d = np.outer(yaw_dir, yaw_dir)
            cov = var_o * np.eye(3) + (var_t - var_o) * d
            raw = SunMeasurement(raw.direction, cov, raw.frame, raw.source)
        self._cache[frame] = raw
        return raw

    def _generate(self, frame: int, predicted: np.ndarray) -> SunMeasurement | None:
        if self.sun.source == "file":
            return self.detections.get(frame)
        rng = _rng(self.cfg.seed, _TAG_SUN, frame)
        truth = self.tracks.truth_poses[frame]
        if self.sun.source == "oracle":
            return oracle_measurement(
                truth, self.sun_world_true, math.radians(self.sun.sigma_deg), rng, frame
            )
        bm = self.sun.bimodal
        det = bimodal_measurement(
            truth,
            self.sun_world_true,
            math.radians(bm.azimuth_sigma_deg),
            rng,
            wrong_mode_prob=bm.wrong_mode_prob,
            sigma_zenith=math.radians(bm.zenith_sigma_deg),
            top_weight_range=(bm.top_weight_low, bm.top_weight_high),
        )
        if self.sun.prior:
            prior_angles, degenerate = camera_azzen_from_vec(predicted)
            if degenerate:
                chosen = det.candidates[int(np.argmax(det.weights))]
            else:
                chosen = vo_prior_disambiguate(
                    det.candidates, det.weights, SunPrior(prior_angles)
                )
        else:
            chosen = det.candidates[int(np.argmax(det.weights))]
        direction = camera_vec_from_azzen(chosen)
        az_sig = math.radians(bm.azimuth_sigma_deg)
        zen_sig = math.radians(bm.zenith_sigma_deg)
        var = 0.5 * (az_sig * az_sig * math.sin(chosen.zenith) ** 2 + zen_sig * zen_sig)
        return SunMeasurement(direction, max(var, 1e-10) * np.eye(3), frame, "bimodal-sim")


def run_with_stats(cfg: RunConfig, tracks: TrackTable) -> tuple[Trajectory, RunStats]:
    """Run sliding-window VO over a track table.

    pre: tracks.n_frames >= cfg.window
    post: len(trajectory) == tracks.n_frames
    post: trajectory.poses[0] is exactly the configured anchor
    raises PipelineAbort: when RANSAC initialization or a window solve fails
    """
    n_frames = tracks.n_frames
    window = cfg.window
    if n_frames < window:
        raise ValueError(f"track table spans {n_frames} frame(s); window needs {window}")

    stats = RunStats()
    k = cfg.intrinsics
    sun_source = _SunSource(cfg, tracks, stats) if cfg.sun.source != "off" else None

    drift = cfg.drift
    bias_deg = drift.yaw_bias_deg
    if drift.yaw_bias_sigma_deg > 0.0:
        bias_deg += float(_rng(cfg.seed, _TAG_BIAS).normal(0.0, drift.yaw_bias_sigma_deg))

    def yaw_step(frame: int) -> float:
        """Heading perturbation picked up on the step into ``frame`` (rad)."""
        theta = bias_deg
        if drift.yaw_sigma_deg > 0.0:
            theta += float(_rng(cfg.seed, _TAG_YAW, frame).normal(0.0, drift.yaw_sigma_deg))
        return math.radians(theta)

    # Cumulative disturbance so each per-frame draw enters the committed
    # chain exactly once no matter how the window strides over frames.
    yaw_accum = [0.0] * n_frames
    for f in range(1, n_frames):
        yaw_accum[f] = yaw_accum[f - 1] + yaw_step(f)

    committed: list[Pose | None] = [None] * n_frames
    committed[0] = anchor_pose(cfg)

    pair_cache: dict[int, tuple[Pose, list[int]]] = {}

    def pair(f: int) -> tuple[Pose, list[int]]:
        """T_{f+1,f} and its inlier track ids, cached per frame pair."""
        if f not in pair_cache:
            seed = int(np.random.SeedSequence([cfg.seed, _TAG_RANSAC, f]).generate_state(1)[0])
            rcfg = replace(cfg.ransac, seed=seed)
            try:
                pair_cache[f] = ransac_interframe(tracks, f, k, rcfg)
            except InitializationError as exc:
                raise PipelineAbort(
                    f"frame {f}->{f + 1}: {exc}", frame=exc.frame
                ) from exc
        return pair_cache[f]

    def commit(frame: int, pose: Pose, base: int) -> None:
        theta = yaw_accum[frame] - yaw_accum[base]
        rot = pose.rotation
        if theta != 0.0:
            rot = Rotation.about_z(theta) @ rot
        committed[frame] = Pose(rot.renormalized(), pose.translation)

    for w in range(n_frames - window + 1):
        base = w
        frames = list(range(base, base + window))

        # Chain pairwise estimates into initial T_cam_base guesses.
        guesses = [Pose.identity()]
        inlier_sets = []
        for f in frames[:-1]:
            rel, inliers = pair(f)  # T_{f+1, f}
            guesses.append(rel @ guesses[-1])
            inlier_sets.append(set(inliers))

        # Landmarks: tracks inlying in at least one window pair, observed at
        # the base frame with usable disparity, and seen >= 2 times in-window.
        candidates = sorted(set().union(*inlier_sets))
        frame_obs = [tracks.observations_in_frame(f) for f in frames]
        ids, landmarks, observations = [], [], []
        for tid in candidates:
            obs_base = frame_obs[0].get(tid)
            if obs_base is None or obs_base.d <= 0.1:
                continue
            in_window = [
                (lf, fo[tid]) for lf, fo in enumerate(frame_obs) if tid in fo
            ]
            if len(in_window) < 2:
                continue
            lm_idx = len(ids)
            ids.append(tid)
            landmarks.append(triangulate(k, obs_base.uvd))
            observations.extend((lf, lm_idx, o) for lf, o in in_window)
        if not ids:
            raise PipelineAbort(f"window {w}: no usable landmarks", window=w)

        t_base_world = committed[base].inverse()
        sun_measurements = []
        if sun_source is not None:
            horiz = np.cross([0.0, 0.0, 1.0], sun_source.sun_world)
            horiz_norm = float(np.linalg.norm(horiz))
            for f in frames[1:]:
                if f % cfg.sun.cadence != 0:
                    continue
                predicted = predict_sun(
                    guesses[f - base], t_base_world, sun_source.sun_world
                )
                yaw_dir = None
                if horiz_norm > 1e-6:
                    r_cw = guesses[f - base].rotation @ t_base_world.rotation
                    yaw_dir = r_cw.apply(horiz / horiz_norm)
                m = sun_source.measurement(f, predicted, yaw_dir)
                if m is not None:
                    sun_measurements.append((f - base, m))

        problem = WindowProblem(
            poses=guesses,
            landmarks=np.array(landmarks),
            observations=observations,
            intrinsics=k,
            sun_measurements=sun_measurements,
            t_base_world=t_base_world,
            sun_world=sun_source.sun_world if sun_source is not None else None,
        )
        try:
            estimate, report = solve_window(problem, cfg.solver)
        except SolverSingularError as exc:
            raise PipelineAbort(f"window {w}: {exc}", window=w) from exc
        stats.windows += 1
        stats.solver_iterations += report.iterations
        stats.dropped_observations += report.dropped_observations

        to_commit = range(1, window) if w == 0 else [window - 1]
        for local in to_commit:
            world_pose = committed[base] @ estimate.poses[local].inverse()
            commit(base + local, world_pose, base)

    t0 = cfg.ephemeris.t0
    timestamps = tuple(t0 + f / cfg.frame_rate_hz for f in range(n_frames))
    return Trajectory(tuple(committed), timestamps), stats


def run(cfg: RunConfig, tracks: TrackTable) -> Trajectory:
    """Convenience wrapper returning only the trajectory."""
    trajectory, _ = run_with_stats(cfg, tracks)
    return trajectory
