"""Rigid-body transforms, rotation parameterizations, and sky-direction angles.

Frame conventions used throughout the package:

* ``T_a_b`` denotes the pose of frame ``b`` expressed in frame ``a``; it maps
  points from frame ``b`` to frame ``a``: ``p_a = T_a_b * p_b``.
* The world frame is East-North-Up (ENU): x = East, y = North, z = Up.
* The camera frame is z = optical axis (forward), x = right, y = down.
* se(3) tangent vectors are ordered ``xi = [phi; rho]`` with the rotation
  part ``phi`` first and the translation part ``rho`` second.  Pose updates
  are left-multiplicative: ``T <- exp(xi) * T``.
* Sky directions use compass azimuth (clockwise from North, so East = 90
  degrees) and zenith angle (0 at the zenith, pi/2 on the horizon).

All angles are radians unless a name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LogMapSingularError",
    "skew",
    "so3_exp",
    "so3_log",
    "rotation_angle",
    "Rotation",
    "Pose",
    "transform_point",
    "se3_exp",
    "se3_log",
    "AzZen",
    "unitvec_from_azzen",
    "azzen_from_unitvec",
    "level_camera_pose",
    "quat_from_matrix",
    "matrix_from_quat",
]

# Below this angle the closed-form Rodrigues/V-matrix coefficients lose
# precision to cancellation; switch to their Taylor series.
_SMALL_ANGLE = 1e-3

# log map is undefined at pi; refuse slightly before it.
_LOG_ANGLE_LIMIT = math.pi - 1e-6

_ORTHONORMAL_TOL = 1e-9


class LogMapSingularError(ValueError):
    """Rotation angle too close to pi for a well-conditioned log map."""


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _sin_cos_coeffs(theta: float) -> tuple[float, float]:
    """Return (sin(t)/t, (1-cos(t))/t^2) with series fallback near zero."""
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0)
        b = 0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0))
        return a, b
    return math.sin(theta) / theta, (1.0 - math.cos(theta)) / (theta * theta)


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues formula: rotation matrix for a rotation vector."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    a, b = _sin_cos_coeffs(theta)
    k = skew(phi)
    return np.eye(3) + a * k + b * (k @ k)


def rotation_angle(r: np.ndarray) -> float:
    """Rotation angle in [0, pi].

    Uses atan2 of the skew part against the trace, which stays accurate both
    near identity (where acos of the trace loses ~8 digits) and near pi.
    """
    w = np.array(
        [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]
    )
    s = 0.5 * float(np.linalg.norm(w))  # sin(theta)
    c = 0.5 * (float(np.trace(r)) - 1.0)  # cos(theta)
    return math.atan2(s, c)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix.

    Raises LogMapSingularError when the angle is within 1e-6 of pi, where the
    axis is not recoverable from the skew part.
    """
    theta = rotation_angle(r)
    if theta >= _LOG_ANGLE_LIMIT:
        raise LogMapSingularError(
            f"rotation angle {theta:.9f} rad is too close to pi for log()"
        )
    w = np.array(
        [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]
    )
    if theta < _SMALL_ANGLE:
        # w = 2 sin(theta) * axis; theta/(2 sin(theta)) ~ 1/2 + theta^2/12
        t2 = theta * theta
        return (0.5 + t2 / 12.0 + 7.0 * t2 * t2 / 720.0) * w
    return (theta / (2.0 * math.sin(theta))) * w


def _so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    """V matrix coupling rotation and translation in the se(3) exponential."""
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        b = 0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0))
        c = (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)) / 6.0
    else:
        t2 = theta * theta
        b = (1.0 - math.cos(theta)) / t2
        c = (theta - math.sin(theta)) / (t2 * theta)
    return np.eye(3) + b * k + c * (k @ k)


def _so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        c = (1.0 + t2 / 60.0 * (1.0 + t2 / 42.0)) / 12.0
    else:
        c = (1.0 - 0.5 * theta * math.sin(theta) / (1.0 - math.cos(theta))) / (
            theta * theta
        )
    return np.eye(3) - 0.5 * k + c * (k @ k)


def _check_rotation_matrix(m: np.ndarray) -> None:
    if m.shape != (3, 3):
        raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
    err = np.abs(m.T @ m - np.eye(3)).max()
    if err > _ORTHONORMAL_TOL:
        raise ValueError(f"matrix is not orthonormal (max deviation {err:.3e})")
    if np.linalg.det(m) < 0.0:
        raise ValueError("matrix has determinant -1 (reflection, not rotation)")


class Rotation:
    """Element of SO(3) stored as a 3x3 matrix.

    Instances are immutable; composition and inverse trust their operands so
    validation cost is paid only at construction from raw matrices.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix: np.ndarray, *, _trusted: bool = False):
        m = np.array(matrix, dtype=float)
        if not _trusted:
            _check_rotation_matrix(m)
        m.setflags(write=False)
        self._m = m

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3), _trusted=True)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Rotation":
        return cls(matrix)

    @classmethod
    def exp(cls, phi: np.ndarray) -> "Rotation":
        return cls(so3_exp(phi), _trusted=True)

    @classmethod
    def about_z(cls, angle: float) -> "Rotation":
        return cls.exp(np.array([0.0, 0.0, float(angle)]))

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    def log(self) -> np.ndarray:
        return so3_log(self._m)

    def angle(self) -> float:
        return rotation_angle(self._m)

    def compose(self, other: "Rotation") -> "Rotation":
        return Rotation(self._m @ other._m, _trusted=True)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return self.compose(other)

    def inverse(self) -> "Rotation":
        return Rotation(self._m.T, _trusted=True)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Rotate one (3,) vector or a stack (..., 3) of vectors."""
        v = np.asarray(v, dtype=float)
        return v @ self._m.T

    def renormalized(self) -> "Rotation":
        """Project back onto SO(3); use after long composition chains."""
        u, _, vt = np.linalg.svd(self._m)
        d = np.sign(np.linalg.det(u @ vt))
        return Rotation(u @ np.diag([1.0, 1.0, d]) @ vt, _trusted=True)

    def angle_to(self, other: "Rotation") -> float:
        return rotation_angle(self._m @ other._m.T)

    def __repr__(self) -> str:
        return f"Rotation({np.array2string(self._m, precision=6)})"


class Pose:
    """Element of SE(3): rotation plus translation.

    A ``Pose`` named ``T_a_b`` maps points from frame ``b`` into frame ``a``.
    """

    __slots__ = ("_r", "_t")

    def __init__(self, rotation: Rotation, translation: np.ndarray):
        if not isinstance(rotation, Rotation):
            rotation = Rotation(rotation)
        t = np.array(translation, dtype=float).reshape(3)
        t.setflags(write=False)
        self._r = rotation
        self._t = t

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4) or not np.allclose(m[3], [0, 0, 0, 1]):
            raise ValueError("pose matrix must be 4x4 homogeneous")
        return cls(Rotation(m[:3, :3]), m[:3, 3])

    @classmethod
    def exp(cls, xi: np.ndarray) -> "Pose":
        """se(3) exponential of ``xi = [phi; rho]`` (rotation first)."""
        xi = np.asarray(xi, dtype=float).reshape(6)
        phi, rho = xi[:3], xi[3:]
        return cls(Rotation.exp(phi), _so3_left_jacobian(phi) @ rho)

    @property
    def rotation(self) -> Rotation:
        return self._r

    @property
    def translation(self) -> np.ndarray:
        return self._t

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self._r.matrix
        m[:3, 3] = self._t
        return m

    def log(self) -> np.ndarray:
        """se(3) logarithm, inverse of :meth:`exp` away from angle pi."""
        phi = self._r.log()
        rho = _so3_left_jacobian_inv(phi) @ self._t
        return np.concatenate([phi, rho])

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self._r.compose(other._r),
            self._r.apply(other._t) + self._t,
        )

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rinv = self._r.inverse()
        return Pose(rinv, -rinv.apply(self._t))

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or a stack (..., 3) of points."""
        return self._r.apply(p) + self._t

    def __repr__(self) -> str:
        return (
            f"Pose(t={np.array2string(self._t, precision=6)}, "
            f"R={np.array2string(self._r.matrix, precision=6)})"
        )


def transform_point(t: Pose, p: np.ndarray) -> np.ndarray:
    """Map point(s) ``p`` through ``t``: returns ``R @ p + t``."""
    return t.apply(p)


def se3_exp(xi: np.ndarray) -> Pose:
    """SE(3) exponential of ``xi = [phi; rho]`` (rotation block first)."""
    return Pose.exp(xi)


def se3_log(t: Pose) -> np.ndarray:
    """SE(3) logarithm; inverse of :func:`se3_exp` for angles below pi."""
    return t.log()


@dataclass(frozen=True)
class AzZen:
    """Sky direction: compass azimuth (clockwise from North) and zenith angle.

    Azimuth is normalized into [0, 2*pi); zenith must lie in [0, pi].
    """

    azimuth: float
    zenith: float

    def __post_init__(self):
        object.__setattr__(self, "azimuth", float(self.azimuth) % (2.0 * math.pi))
        zen = float(self.zenith)
        if not -1e-12 <= zen <= math.pi + 1e-12:
            raise ValueError(f"zenith {zen} outside [0, pi]")
        object.__setattr__(self, "zenith", min(max(zen, 0.0), math.pi))

    @property
    def elevation(self) -> float:
        return 0.5 * math.pi - self.zenith


def unitvec_from_azzen(a: AzZen) -> np.ndarray:
    """ENU unit vector for a sky direction.

    Azimuth 0 / zenith pi/2 is due North on the horizon; azimuth pi/2 is East.
    """
    sz = math.sin(a.zenith)
    return np.array(
        [math.sin(a.azimuth) * sz, math.cos(a.azimuth) * sz, math.cos(a.zenith)]
    )


def azzen_from_unitvec(v: np.ndarray) -> tuple[AzZen, bool]:
    """Inverse of :func:`unitvec_from_azzen`.

    Returns ``(angles, degenerate)``; ``degenerate`` is True at the zenith or
    nadir where azimuth is undefined (it is reported as 0 there).
    """
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if not math.isfinite(n) or n < 1e-12:
        raise ValueError("direction vector must be finite and nonzero")
    e, nn, u = (float(x) / n for x in v)
    horiz = math.hypot(e, nn)
    zen = math.atan2(horiz, u)
    if horiz < 1e-12:
        return AzZen(0.0, zen), True
    return AzZen(math.atan2(e, nn) % (2.0 * math.pi), zen), False


def level_camera_pose(heading: float, position: np.ndarray) -> Pose:
    """Pose T_world_cam of a level camera at ``position`` facing ``heading``.

    Heading is compass style (0 = North, pi/2 = East).  The camera's optical
    axis (z) points along the heading in the horizontal plane, x points to the
    camera's right, and y points straight down.
    """
    sh, ch = math.sin(heading), math.cos(heading)
    # Columns are the camera axes expressed in ENU.
    r = np.array(
        [
            [ch, 0.0, sh],
            [-sh, 0.0, ch],
            [0.0, -1.0, 0.0],
        ]
    )
    return Pose(Rotation(r, _trusted=True), np.asarray(position, dtype=float))


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix (Shepperd's method)."""
    r = np.asarray(r, dtype=float)
    t = np.trace(r)
    if t > max(r[0, 0], r[1, 1], r[2, 2]):
        w = math.sqrt(1.0 + t) / 2.0
        q = np.array(
            [
                w,
                (r[2, 1] - r[1, 2]) / (4.0 * w),
                (r[0, 2] - r[2, 0]) / (4.0 * w),
                (r[1, 0] - r[0, 1]) / (4.0 * w),
            ]
        )
    else:
        i = int(np.argmax([r[0, 0], r[1, 1], r[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(1.0 + r[i, i] - r[j, j] - r[k, k]) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = s / 4.0
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a (w, x, y, z) quaternion (normalized internally)."""
    q = np.asarray(q, dtype=float).reshape(4)
    n = float(np.linalg.norm(q))
    if n < 1e-12:
        raise ValueError("zero quaternion")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
