"""Solar machinery: ephemeris, predicted direction, measurement sources,
gating, and the VO-informed prior used to disambiguate bimodal detections.

Direction conventions:

* World sun direction ``sun_world`` is an ENU unit vector (geometry module
  azimuth/zenith convention).
* Measurements and predictions live in the camera frame.  Camera-frame sky
  angles use ``AzZen`` with azimuth measured about the camera's up direction
  (-y), zero along the optical axis (+z), positive toward +x, and zenith
  measured from camera up; for a level camera facing North these coincide
  with the compass convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AzZen, Pose, so3_exp

__all__ = [
    "EphemerisRangeError",
    "EphemerisQuery",
    "solar_ephemeris",
    "solar_azimuth_elevation",
    "SunMeasurement",
    "SunPrior",
    "predict_sun",
    "camera_vec_from_azzen",
    "camera_azzen_from_vec",
    "oracle_measurement",
    "BimodalDetection",
    "bimodal_measurement",
    "vo_prior_disambiguate",
    "gate_measurement",
    "azimuth_only",
    "DEFAULT_COS_GATE",
    "DEFAULT_Y_GATE",
    "DEFAULT_CADENCE",
]

# Cosine-distance gate and vertical-component gate defaults.
DEFAULT_COS_GATE = 0.3
DEFAULT_Y_GATE = 0.3
# Use a sun measurement every Nth frame by default.
DEFAULT_CADENCE = 5

# Validity window of the low-accuracy ephemeris series (years 1950..2050).
_T_MIN = -631152000.0  # 1950-01-01T00:00:00Z
_T_MAX = 2556143999.0  # 2050-12-31T23:59:59Z

_AZIMUTH_ONLY_VERTICAL_VAR = 1e6


class EphemerisRangeError(ValueError):
    """Timestamp outside the 1950-2050 validity window."""


@dataclass(frozen=True)
class EphemerisQuery:
    """Observer location (degrees) and UTC timestamp (unix seconds)."""

    lat_deg: float
    lon_deg: float
    t_unix: float

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"longitude {self.lon_deg} outside [-180, 180]")
        if not math.isfinite(self.t_unix):
            raise ValueError("timestamp must be finite")
        if not _T_MIN <= self.t_unix <= _T_MAX:
            raise EphemerisRangeError(
                f"timestamp {self.t_unix} outside the 1950-2050 validity window"
            )


def solar_azimuth_elevation(q: EphemerisQuery) -> tuple[float, float]:
    """Geometric solar azimuth and elevation in radians.

    Low-accuracy Meeus series as used by the NOAA solar calculator; no
    atmospheric refraction, UT taken as TT.  Good to well under 0.2 degrees
    inside the 1950-2050 window.
    """
    d2r = math.radians
    # Julian centuries since J2000.0.
    jd = q.t_unix / 86400.0 + 2440587.5
    t = (jd - 2451545.0) / 36525.0

    # Geometric mean longitude and mean anomaly of the sun (degrees).
    l0 = (280.46646 + t * (36000.76983 + 0.0003032 * t)) % 360.0
    m = 357.52911 + t * (35999.05029 - 0.0001537 * t)
    # Eccentricity of Earth's orbit.
    e = 0.016708634 - t * (0.000042037 + 0.0000001267 * t)
    # Equation of center.
    c = (
        math.sin(d2r(m)) * (1.914602 - t * (0.004817 + 0.000014 * t))
        + math.sin(d2r(2 * m)) * (0.019993 - 0.000101 * t)
        + math.sin(d2r(3 * m)) * 0.000289
    )
    true_long = l0 + c
    # Apparent longitude, corrected for nutation and aberration.
    omega = 125.04 - 1934.136 * t
    lam = true_long - 0.00569 - 0.00478 * math.sin(d2r(omega))

    # Mean obliquity of the ecliptic, with nutation correction.
    eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - 0.001813 * t))) / 60.0) / 60.0
    eps = eps0 + 0.00256 * math.cos(d2r(omega))

    decl = math.asin(math.sin(d2r(eps)) * math.sin(d2r(lam)))

    # Equation of time (minutes).
    y = math.tan(d2r(eps / 2.0)) ** 2
    eot = 4.0 * math.degrees(
        y * math.sin(2 * d2r(l0))
        - 2.0 * e * math.sin(d2r(m))
        + 4.0 * e * y * math.sin(d2r(m)) * math.cos(2 * d2r(l0))
        - 0.5 * y * y * math.sin(4 * d2r(l0))
        - 1.25 * e * e * math.sin(2 * d2r(m))
    )

    # True solar time (minutes) -> hour angle (degrees from solar noon).
    minutes_utc = (q.t_unix % 86400.0) / 60.0
    tst = (minutes_utc + eot + 4.0 * q.lon_deg) % 1440.0
    hour_angle = tst / 4.0 - 180.0

    phi = d2r(q.lat_deg)
    h = d2r(hour_angle)
    elevation = math.asin(
        math.sin(phi) * math.sin(decl) + math.cos(phi) * math.cos(decl) * math.cos(h)
    )
    # Azimuth from North, clockwise (eastward); atan2 form is stable at all
    # elevations away from the exact zenith.
    az_south = math.atan2(
        math.sin(h), math.cos(h) * math.sin(phi) - math.tan(decl) * math.cos(phi)
    )
    azimuth = (az_south + math.pi) % (2.0 * math.pi)
    return azimuth, elevation


def solar_ephemeris(q: EphemerisQuery) -> np.ndarray:
    """ENU unit vector toward the sun for the given query."""
    az, el = solar_azimuth_elevation(q)
    sz = math.cos(el)  # sin(zenith)
    return np.array([math.sin(az) * sz, math.cos(az) * sz, math.sin(el)])


def _check_spd(cov: np.ndarray, what: str) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (3, 3) or not np.allclose(cov, cov.T, atol=1e-9):
        raise ValueError(f"{what} must be a symmetric 3x3 matrix")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{what} must be positive definite") from exc
    return cov


@dataclass(frozen=True)
class SunMeasurement:
    """Camera-frame sun direction with covariance and provenance."""

    direction: np.ndarray
    cov: np.ndarray
    frame: int
    source: str  # oracle | bimodal-sim | file

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = float(np.linalg.norm(d))
        if abs(n - 1.0) > 1e-3:
            raise ValueError(f"sun direction norm {n:.6f} is off unit by > 1e-3")
        cov = _check_spd(self.cov, "sun covariance").copy()
        d = d.copy()
        d.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "cov", cov)
        if self.frame < 0:
            raise ValueError("frame index must be non-negative")


@dataclass(frozen=True)
class SunPrior:
    """Azimuth-zenith Gaussian prior centered on the VO-predicted direction.

    Default sigmas come from 3-sigma spans of 360 degrees (azimuth) and 90
    degrees (zenith).
    """

    mean: AzZen
    sigma_azimuth: float = math.radians(60.0)
    sigma_zenith: float = math.radians(15.0)

    def __post_init__(self):
        if self.sigma_azimuth <= 0.0 or self.sigma_zenith <= 0.0:
            raise ValueError("prior sigmas must be strictly positive")


def predict_sun(t_cam_base: Pose, t_base_world: Pose, sun_world: np.ndarray) -> np.ndarray:
    """Predicted camera-frame sun direction.

    Applies the rotation-only chain camera <- base <- world to the world sun
    direction; translations are irrelevant for a direction at infinity.
    """
    r = t_cam_base.rotation.compose(t_base_world.rotation)
    return r.apply(np.asarray(sun_world, dtype=float))


# Camera sky basis: for a direction expressed in "camera sky" angles, azimuth
# 0 is the optical axis (+z), azimuth +90 deg is camera right (+x), and the
# zenith reference is camera up (-y).
def camera_vec_from_azzen(a: AzZen) -> np.ndarray:
    sz = math.sin(a.zenith)
    return np.array(
        [math.sin(a.azimuth) * sz, -math.cos(a.zenith), math.cos(a.azimuth) * sz]
    )


def camera_azzen_from_vec(v: np.ndarray) -> tuple[AzZen, bool]:
    """Camera sky angles of a camera-frame direction; flags the degenerate
    straight-up/straight-down case where azimuth is undefined."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if not math.isfinite(n) or n < 1e-12:
        raise ValueError("direction vector must be finite and nonzero")
    x, y, z = (float(c) / n for c in v)
    horiz = math.hypot(x, z)
    zen = math.atan2(horiz, -y)
    if horiz < 1e-12:
        return AzZen(0.0, zen), True
    return AzZen(math.atan2(x, z) % (2.0 * math.pi), zen), False


def _tangent_axis(direction: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform random unit axis perpendicular to ``direction``."""
    # Any vector not parallel to direction seeds the orthonormal pair.
    helper = np.array([1.0, 0.0, 0.0])
    if abs(float(direction @ helper)) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(direction, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(direction, e1)
    psi = rng.uniform(0.0, 2.0 * math.pi)
    return math.cos(psi) * e1 + math.sin(psi) * e2


def oracle_measurement(
    truth_pose_world_cam: Pose,
    sun_world: np.ndarray,
    sigma: float,
    rng: np.random.Generator | int,
    frame: int = 0,
) -> SunMeasurement:
    """Simulated perfect-detector measurement of the camera-frame sun.

    The true direction is tilted by an angle drawn N(0, sigma) about a random
    axis in its tangent plane, so the angular error is exactly |N(0, sigma)|.
    Covariance is isotropic with the tangent-plane per-axis variance
    sigma^2 / 2 (floored to stay positive definite at sigma = 0).
    """
    if sigma < 0.0:
        raise ValueError("sigma must be non-negative")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    s_true = truth_pose_world_cam.rotation.inverse().apply(
        np.asarray(sun_world, dtype=float)
    )
    s_true = s_true / np.linalg.norm(s_true)
    if sigma > 0.0:
        angle = rng.normal(0.0, sigma)
        axis = _tangent_axis(s_true, rng)
        direction = so3_exp(angle * axis) @ s_true
    else:
        direction = s_true
    var = max(0.5 * sigma * sigma, 1e-10)
    return SunMeasurement(direction, var * np.eye(3), frame, "oracle")


@dataclass(frozen=True)
class BimodalDetection:
    """Two sky-direction hypotheses 180 degrees apart with likelihood weights."""

    candidate_a: AzZen  # noisy true mode
    candidate_b: AzZen  # 180-degree flipped mode
    weights: tuple[float, float]

    @property
    def candidates(self) -> tuple[AzZen, AzZen]:
        return (self.candidate_a, self.candidate_b)


def bimodal_measurement(
    truth_pose_world_cam: Pose,
    sun_world: np.ndarray,
    sigma_azimuth: float,
    rng: np.random.Generator | int,
    wrong_mode_prob: float = 0.5,
    sigma_zenith: float = math.radians(5.0),
    top_weight_range: tuple[float, float] = (0.5, 0.75),
) -> BimodalDetection:
    """Simulate a shadow-cue detector with a 180-degree azimuth ambiguity.

    Candidate A is the true camera-sky azimuth plus Gaussian noise; candidate
    B is A rotated 180 degrees.  Both share a noisy zenith.  With probability
    ``wrong_mode_prob`` the higher likelihood weight lands on the wrong mode.
    """
    if sigma_azimuth <= 0.0:
        raise ValueError("sigma_azimuth must be positive")
    if not 0.0 <= wrong_mode_prob <= 1.0:
        raise ValueError("wrong_mode_prob must be in [0, 1]")
    lo, hi = top_weight_range
    if not 0.5 <= lo <= hi < 1.0:
        raise ValueError("top_weight_range must satisfy 0.5 <= lo <= hi < 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    s_true = truth_pose_world_cam.rotation.inverse().apply(
        np.asarray(sun_world, dtype=float)
    )
    true_angles, _ = camera_azzen_from_vec(s_true)
    az = true_angles.azimuth + rng.normal(0.0, sigma_azimuth)
    zen = true_angles.zenith + rng.normal(0.0, sigma_zenith)
    zen = min(max(zen, 1e-6), math.pi - 1e-6)
    cand_a = AzZen(az, zen)
    cand_b = AzZen(az + math.pi, zen)
    top = float(rng.uniform(lo, hi))
    if rng.random() < wrong_mode_prob:
        weights = (1.0 - top, top)
    else:
        weights = (top, 1.0 - top)
    return BimodalDetection(cand_a, cand_b, weights)


def _wrap_pi(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def vo_prior_disambiguate(
    candidates: tuple[AzZen, ...] | list[AzZen],
    weights: tuple[float, ...] | list[float] | np.ndarray,
    prior: SunPrior,
) -> AzZen:
    """Select the candidate maximizing weight x prior density.

    The prior is an unnormalized Gaussian in azimuth-zenith with the azimuth
    difference wrapped to [-pi, pi]; selection is invariant to uniform
    scaling of the weights.  Ties go to the earlier candidate.
    """
    if len(candidates) < 1:
        raise ValueError("need at least one candidate")
    if len(weights) != len(candidates):
        raise ValueError("weights and candidates must have equal length")
    best_idx = 0
    best_score = -math.inf
    for i, (cand, w) in enumerate(zip(candidates, weights)):
        daz = _wrap_pi(cand.azimuth - prior.mean.azimuth)
        dzen = cand.zenith - prior.mean.zenith
        log_density = (
            -0.5 * (daz / prior.sigma_azimuth) ** 2
            - 0.5 * (dzen / prior.sigma_zenith) ** 2
        )
        score = math.log(max(float(w), 1e-300)) + log_density
        if score > best_score:
            best_score = score
            best_idx = i
    return candidates[best_idx]


def gate_measurement(
    measurement: SunMeasurement | np.ndarray,
    predicted: np.ndarray,
    cos_thresh: float = DEFAULT_COS_GATE,
    y_thresh: float = DEFAULT_Y_GATE,
) -> tuple[bool, str | None]:
    """Accept/reject a sun measurement against the VO-predicted direction.

    Rejects when the cosine distance (1 - dot) exceeds ``cos_thresh`` or when
    the camera-frame vertical (y) component error exceeds ``y_thresh``.
    Returns ``(accepted, reason)`` with reason one of ``cosine-gate`` or
    ``zenith-gate`` when rejected.
    """
    s = measurement.direction if isinstance(measurement, SunMeasurement) else measurement
    s = np.asarray(s, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if abs(float(np.linalg.norm(s)) - 1.0) > 1e-3 or abs(float(np.linalg.norm(p)) - 1.0) > 1e-3:
        raise ValueError("gate inputs must be unit vectors")
    if 1.0 - float(s @ p) > cos_thresh:
        return False, "cosine-gate"
    if abs(float(s[1] - p[1])) > y_thresh:
        return False, "zenith-gate"
    return True, None


def azimuth_only(azimuth: float, sigma_azimuth: float, frame: int) -> SunMeasurement:
    """Measurement from an azimuth-only detector.

    The direction is the horizontal camera-frame unit vector at the given
    camera-sky azimuth (vertical component exactly 0); the vertical variance
    is inflated to 1e6 so the solver extracts no elevation information.
    """
    if sigma_azimuth <= 0.0:
        raise ValueError("sigma_azimuth must be positive")
    direction = camera_vec_from_azzen(AzZen(azimuth, 0.5 * math.pi))
    var_h = sigma_azimuth * sigma_azimuth
    cov = np.diag([var_h, _AZIMUTH_ONLY_VERTICAL_VAR, var_h])
    return SunMeasurement(direction, cov, frame, "file")
