"""Run configuration: JSON schema, strict parsing, defaults.

The JSON document mirrors the dataclass tree below; unknown keys anywhere
are rejected so typos fail loudly.  See the README for the full schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .camera import StereoIntrinsics
from .frontend import RansacConfig
from .solver import SolverOptions

__all__ = [
    "ConfigError",
    "InitialPoseConfig",
    "SunSettings",
    "BimodalSettings",
    "EphemerisSettings",
    "DriftSettings",
    "RunConfig",
    "SyntheticSettings",
    "SegmentSettings",
    "ModeSettings",
    "MonteCarloSettings",
    "ExperimentConfig",
    "load_config",
    "config_from_dict",
]

SUN_SOURCES = ("off", "oracle", "bimodal", "file")


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass(frozen=True)
class InitialPoseConfig:
    """World anchor T_1w: either a level pose at a heading or a quaternion."""

    position: tuple[float, float, float] = (0.0, 0.0, 1.6)
    heading_deg: float = 0.0
    quaternion_wxyz: tuple[float, float, float, float] | None = None
    explicit: bool = False  # set when the user provided the section


@dataclass(frozen=True)
class BimodalSettings:
    azimuth_sigma_deg: float = 10.0
    zenith_sigma_deg: float = 5.0
    wrong_mode_prob: float = 0.5
    top_weight_low: float = 0.5
    top_weight_high: float = 0.75


@dataclass(frozen=True)
class SunSettings:
    source: str = "off"
    cadence: int = 5
    cos_gate: float = 0.3
    y_gate: float = 0.3
    sigma_deg: float = 5.0
    weight_sigma_deg: float | None = None
    prior: bool = True
    world_direction: tuple[float, float, float] | None = None
    detections_path: str | None = None
    static_limit_s: float = 600.0
    bimodal: BimodalSettings = field(default_factory=BimodalSettings)

    def __post_init__(self):
        if self.source not in SUN_SOURCES:
            raise ConfigError(f"sun.source must be one of {SUN_SOURCES}, got {self.source!r}")
        if self.cadence < 1:
            raise ConfigError("sun.cadence must be >= 1")
        if self.cos_gate <= 0.0 or self.y_gate <= 0.0:
            raise ConfigError("sun gates must be positive")
        if self.sigma_deg < 0.0:
            raise ConfigError("sun.sigma_deg must be >= 0")
        if self.weight_sigma_deg is not None and self.weight_sigma_deg <= 0.0:
            raise ConfigError("sun.weight_sigma_deg must be positive when set")
        if self.world_direction is not None:
            n = math.sqrt(sum(c * c for c in self.world_direction))
            if abs(n - 1.0) > 1e-3:
                raise ConfigError("sun.world_direction must be a unit vector")


@dataclass(frozen=True)
class EphemerisSettings:
    lat: float = 49.0
    lon: float = 8.4
    t0: float = 1317384000.0  # unix seconds, UTC

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ConfigError("ephemeris.lat outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ConfigError("ephemeris.lon outside [-180, 180]")


@dataclass(frozen=True)
class DriftSettings:
    """Injected heading disturbance applied to committed world poses.

    ``yaw_bias_deg`` is a fixed per-frame rate; ``yaw_bias_sigma_deg`` draws
    one constant per-frame rate per run from N(0, sigma); ``yaw_sigma_deg``
    adds independent per-frame noise.
    """

    yaw_bias_deg: float = 0.0
    yaw_sigma_deg: float = 0.0
    yaw_bias_sigma_deg: float = 0.0

    def __post_init__(self):
        if self.yaw_sigma_deg < 0.0 or self.yaw_bias_sigma_deg < 0.0:
            raise ConfigError("drift sigmas must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    window: int = 2
    frame_rate_hz: float = 10.0
    seed: int = 0
    intrinsics: StereoIntrinsics = field(
        default_factory=lambda: StereoIntrinsics(
            fu=500.0, fv=500.0, cu=320.0, cv=240.0, baseline_m=0.54, width=640, height=480
        )
    )
    initial_pose: InitialPoseConfig = field(default_factory=InitialPoseConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    sun: SunSettings = field(default_factory=SunSettings)
    ephemeris: EphemerisSettings = field(default_factory=EphemerisSettings)
    drift: DriftSettings = field(default_factory=DriftSettings)
    tracks_path: str | None = None

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError("window must be >= 2")
        if self.frame_rate_hz <= 0.0:
            raise ConfigError("frame_rate_hz must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.sun.source == "file" and not self.sun.detections_path:
            raise ConfigError("sun.source 'file' requires sun.detections_path")


@dataclass(frozen=True)
class SegmentSettings:
    frames: int
    step_m: float
    yaw_rate_deg: float = 0.0


@dataclass(frozen=True)
class SyntheticSettings:
    segments: tuple[SegmentSettings, ...] = (
        SegmentSettings(frames=100, step_m=1.0, yaw_rate_deg=0.0),
    )
    n_landmarks: int = 400
    depth_range: tuple[float, float] = (4.0, 40.0)
    pixel_noise: float = 0.0
    outlier_fraction: float = 0.0
    track_length: tuple[int, int] = (8, 16)
    start_heading_deg: float = 0.0
    start_position: tuple[float, float, float] = (0.0, 0.0, 1.6)


@dataclass(frozen=True)
class ModeSettings:
    """One arm of a Monte Carlo pairing: a sun source plus prior switch."""

    name: str
    source: str
    prior: bool = True

    def __post_init__(self):
        if self.source not in SUN_SOURCES:
            raise ConfigError(f"mode source must be one of {SUN_SOURCES}")


@dataclass(frozen=True)
class MonteCarloSettings:
    trials: int = 20
    workers: int = 1
    modes: tuple[ModeSettings, ...] = (
        ModeSettings(name="off", source="off"),
        ModeSettings(name="oracle", source="oracle"),
    )

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("montecarlo.trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("montecarlo.workers must be >= 1")
        if not self.modes:
            raise ConfigError("montecarlo.modes must not be empty")
        names = [m.name for m in self.modes]
        if len(set(names)) != len(names):
            raise ConfigError("montecarlo mode names must be unique")


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    synthetic: SyntheticSettings | None = None
    montecarlo: MonteCarloSettings | None = None


class _Section:
    """Dict wrapper that tracks consumed keys and rejects leftovers."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'} must be a JSON object")
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def take(self, key: str, default):
        self.used.add(key)
        return self.data.get(key, default)

    def has(self, key: str) -> bool:
        return key in self.data

    def sub(self, key: str) -> "_Section | None":
        self.used.add(key)
        if key not in self.data:
            return None
        return _Section(self.data[key], f"{self.path}.{key}" if self.path else key)

    def finish(self):
        unknown = set(self.data) - self.used
        if unknown:
            where = self.path or "top level"
            raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer")
    return value


def _vec(value, n: int, path: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ConfigError(f"{path} must be a list of {n} numbers")
    return tuple(_num(v, path) for v in value)


def _parse_intrinsics(sec: _Section) -> StereoIntrinsics:
    default = RunConfig().intrinsics
    out = StereoIntrinsics(
        fu=_num(sec.take("fu", default.fu), "intrinsics.fu"),
        fv=_num(sec.take("fv", default.fv), "intrinsics.fv"),
        cu=_num(sec.take("cu", default.cu), "intrinsics.cu"),
        cv=_num(sec.take("cv", default.cv), "intrinsics.cv"),
        baseline_m=_num(sec.take("baseline_m", default.baseline_m), "intrinsics.baseline_m"),
        width=_integer(sec.take("width", default.width), "intrinsics.width"),
        height=_integer(sec.take("height", default.height), "intrinsics.height"),
    )
    sec.finish()
    return out


def _parse_initial_pose(sec: _Section) -> InitialPoseConfig:
    quat = sec.take("quaternion_wxyz", None)
    out = InitialPoseConfig(
        position=_vec(sec.take("position", (0.0, 0.0, 1.6)), 3, "initial_pose.position"),
        heading_deg=_num(sec.take("heading_deg", 0.0), "initial_pose.heading_deg"),
        quaternion_wxyz=None if quat is None else _vec(quat, 4, "initial_pose.quaternion_wxyz"),
        explicit=True,
    )
    sec.finish()
    return out


def _parse_bimodal(sec: _Section) -> BimodalSettings:
    d = BimodalSettings()
    out = BimodalSettings(
        azimuth_sigma_deg=_num(sec.take("azimuth_sigma_deg", d.azimuth_sigma_deg), "sun.bimodal.azimuth_sigma_deg"),
        zenith_sigma_deg=_num(sec.take("zenith_sigma_deg", d.zenith_sigma_deg), "sun.bimodal.zenith_sigma_deg"),
        wrong_mode_prob=_num(sec.take("wrong_mode_prob", d.wrong_mode_prob), "sun.bimodal.wrong_mode_prob"),
        top_weight_low=_num(sec.take("top_weight_low", d.top_weight_low), "sun.bimodal.top_weight_low"),
        top_weight_high=_num(sec.take("top_weight_high", d.top_weight_high), "sun.bimodal.top_weight_high"),
    )
    sec.finish()
    return out


def _parse_sun(sec: _Section) -> SunSettings:
    d = SunSettings()
    bimodal_sec = sec.sub("bimodal")
    weight = sec.take("weight_sigma_deg", None)
    world = sec.take("world_direction", None)
    prior = sec.take("prior", True)
    if not isinstance(prior, bool):
        raise ConfigError("sun.prior must be a boolean")
    out = SunSettings(
        source=sec.take("source", d.source),
        cadence=_integer(sec.take("cadence", d.cadence), "sun.cadence"),
        cos_gate=_num(sec.take("cos_gate", d.cos_gate), "sun.cos_gate"),
        y_gate=_num(sec.take("y_gate", d.y_gate), "sun.y_gate"),
        sigma_deg=_num(sec.take("sigma_deg", d.sigma_deg), "sun.sigma_deg"),
        weight_sigma_deg=None if weight is None else _num(weight, "sun.weight_sigma_deg"),
        prior=prior,
        world_direction=None if world is None else _vec(world, 3, "sun.world_direction"),
        detections_path=sec.take("detections_path", None),
        static_limit_s=_num(sec.take("static_limit_s", d.static_limit_s), "sun.static_limit_s"),
        bimodal=_parse_bimodal(bimodal_sec) if bimodal_sec else BimodalSettings(),
    )
    sec.finish()
    return out


def _parse_run(top: _Section) -> RunConfig:
    intr_sec = top.sub("intrinsics")
    pose_sec = top.sub("initial_pose")
    ransac_sec = top.sub("ransac")
    solver_sec = top.sub("solver")
    sun_sec = top.sub("sun")
    eph_sec = top.sub("ephemeris")
    drift_sec = top.sub("drift")

    ransac = RansacConfig()
    if ransac_sec:
        ransac = RansacConfig(
            iterations=_integer(ransac_sec.take("iterations", 200), "ransac.iterations"),
            threshold_px=_num(ransac_sec.take("threshold_px", 2.0), "ransac.threshold_px"),
            min_inliers=_integer(ransac_sec.take("min_inliers", 6), "ransac.min_inliers"),
            seed=_integer(ransac_sec.take("seed", 0), "ransac.seed"),
        )
        ransac_sec.finish()

    solver = SolverOptions()
    if solver_sec:
        d = SolverOptions()
        solver = SolverOptions(
            max_iters=_integer(solver_sec.take("max_iters", d.max_iters), "solver.max_iters"),
            lambda0=_num(solver_sec.take("lambda0", d.lambda0), "solver.lambda0"),
            update_tol=_num(solver_sec.take("update_tol", d.update_tol), "solver.update_tol"),
            cost_tol=_num(solver_sec.take("cost_tol", d.cost_tol), "solver.cost_tol"),
        )
        solver_sec.finish()

    ephemeris = EphemerisSettings()
    if eph_sec:
        d = EphemerisSettings()
        ephemeris = EphemerisSettings(
            lat=_num(eph_sec.take("lat", d.lat), "ephemeris.lat"),
            lon=_num(eph_sec.take("lon", d.lon), "ephemeris.lon"),
            t0=_num(eph_sec.take("t0", d.t0), "ephemeris.t0"),
        )
        eph_sec.finish()

    drift = DriftSettings()
    if drift_sec:
        d = DriftSettings()
        drift = DriftSettings(
            yaw_bias_deg=_num(drift_sec.take("yaw_bias_deg", d.yaw_bias_deg), "drift.yaw_bias_deg"),
            yaw_sigma_deg=_num(drift_sec.take("yaw_sigma_deg", d.yaw_sigma_deg), "drift.yaw_sigma_deg"),
            yaw_bias_sigma_deg=_num(
                drift_sec.take("yaw_bias_sigma_deg", d.yaw_bias_sigma_deg),
                "drift.yaw_bias_sigma_deg",
            ),
        )
        drift_sec.finish()

    try:
        return RunConfig(
            window=_integer(top.take("window", 2), "window"),
            frame_rate_hz=_num(top.take("frame_rate_hz", 10.0), "frame_rate_hz"),
            seed=_integer(top.take("seed", 0), "seed"),
            intrinsics=_parse_intrinsics(intr_sec) if intr_sec else RunConfig().intrinsics,
            initial_pose=_parse_initial_pose(pose_sec) if pose_sec else InitialPoseConfig(),
            ransac=ransac,
            solver=solver,
            sun=_parse_sun(sun_sec) if sun_sec else SunSettings(),
            ephemeris=ephemeris,
            drift=drift,
            tracks_path=top.take("tracks", None),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _parse_synthetic(sec: _Section) -> SyntheticSettings:
    d = SyntheticSettings()
    segments_raw = sec.take("segments", None)
    if segments_raw is None:
        segments = d.segments
    else:
        if not isinstance(segments_raw, list) or not segments_raw:
            raise ConfigError("synthetic.segments must be a non-empty list")
        segments = []
        for i, seg in enumerate(segments_raw):
            s = _Section(seg, f"synthetic.segments[{i}]")
            segments.append(
                SegmentSettings(
                    frames=_integer(s.take("frames", 1), "segment frames"),
                    step_m=_num(s.take("step_m", 1.0), "segment step_m"),
                    yaw_rate_deg=_num(s.take("yaw_rate_deg", 0.0), "segment yaw_rate_deg"),
                )
            )
            s.finish()
        segments = tuple(segments)
    tl = sec.take("track_length", list(d.track_length))
    if not isinstance(tl, (list, tuple)) or len(tl) != 2:
        raise ConfigError("synthetic.track_length must be [lo, hi]")
    out = SyntheticSettings(
        segments=segments,
        n_landmarks=_integer(sec.take("n_landmarks", d.n_landmarks), "synthetic.n_landmarks"),
        depth_range=_vec(sec.take("depth_range", list(d.depth_range)), 2, "synthetic.depth_range"),
        pixel_noise=_num(sec.take("pixel_noise", d.pixel_noise), "synthetic.pixel_noise"),
        outlier_fraction=_num(
            sec.take("outlier_fraction", d.outlier_fraction), "synthetic.outlier_fraction"
        ),
        track_length=(_integer(tl[0], "track_length lo"), _integer(tl[1], "track_length hi")),
        start_heading_deg=_num(
            sec.take("start_heading_deg", d.start_heading_deg), "synthetic.start_heading_deg"
        ),
        start_position=_vec(
            sec.take("start_position", list(d.start_position)), 3, "synthetic.start_position"
        ),
    )
    sec.finish()
    return out


def _parse_montecarlo(sec: _Section) -> MonteCarloSettings:
    d = MonteCarloSettings()
    modes_raw = sec.take("modes", None)
    if modes_raw is None:
        modes = d.modes
    else:
        if not isinstance(modes_raw, list) or not modes_raw:
            raise ConfigError("montecarlo.modes must be a non-empty list")
        modes = []
        for i, m in enumerate(modes_raw):
            s = _Section(m, f"montecarlo.modes[{i}]")
            name = s.take("name", None)
            source = s.take("source", None)
            if not name or not source:
                raise ConfigError("each montecarlo mode needs 'name' and 'source'")
            prior = s.take("prior", True)
            if not isinstance(prior, bool):
                raise ConfigError("mode prior must be a boolean")
            modes.append(ModeSettings(name=name, source=source, prior=prior))
            s.finish()
        modes = tuple(modes)
    out = MonteCarloSettings(
        trials=_integer(sec.take("trials", d.trials), "montecarlo.trials"),
        workers=_integer(sec.take("workers", d.workers), "montecarlo.workers"),
        modes=modes,
    )
    sec.finish()
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    top = _Section(data, "")
    synthetic_sec = top.sub("synthetic")
    mc_sec = top.sub("montecarlo")
    run = _parse_run(top)
    synthetic = _parse_synthetic(synthetic_sec) if synthetic_sec else None
    montecarlo = _parse_montecarlo(mc_sec) if mc_sec else None
    top.finish()
    return ExperimentConfig(run=run, synthetic=synthetic, montecarlo=montecarlo)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)
