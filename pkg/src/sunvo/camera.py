"""Rectified stereo camera model.

Observation model for a camera-frame point ``p = (x, y, z)``:

    u = fu * x / z + cu          (left-image column, pixels)
    v = fv * y / z + cv          (left-image row, pixels)
    d = fu * baseline / z        (disparity, pixels)

The camera frame has z along the optical axis, x to the right, y down.
Projection requires z above a small positive floor; triangulation requires
disparity above a floor (tiny disparity means near-infinite depth).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BehindCameraError",
    "NearInfiniteDepthError",
    "StereoIntrinsics",
    "StereoObservation",
    "project",
    "triangulate",
    "project_jacobian",
]

DEFAULT_EPS_Z = 1e-6
DEFAULT_MIN_DISPARITY = 0.1


class BehindCameraError(ValueError):
    """Point at or behind the image plane (z <= eps)."""


class NearInfiniteDepthError(ValueError):
    """Disparity at or below the floor; depth is unresolvable."""


@dataclass(frozen=True)
class StereoIntrinsics:
    """Rectified stereo rig parameters (pixels except the metric baseline)."""

    fu: float
    fv: float
    cu: float
    cv: float
    baseline_m: float
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fu <= 0 or self.fv <= 0:
            raise ValueError("focal lengths must be positive")
        if self.baseline_m <= 0:
            raise ValueError("baseline must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")


def _as_points(p: np.ndarray) -> tuple[np.ndarray, bool]:
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        return p.reshape(1, 3), True
    if p.ndim == 2 and p.shape[1] == 3:
        return p, False
    raise ValueError(f"expected (3,) or (n, 3) points, got shape {p.shape}")


def project(
    k: StereoIntrinsics, p_cam: np.ndarray, eps_z: float = DEFAULT_EPS_Z
) -> np.ndarray:
    """Project camera-frame points to (u, v, d).

    Accepts one point (3,) or a stack (n, 3) and returns the same shape.
    Raises BehindCameraError if any point has z <= eps_z.
    """
    pts, single = _as_points(p_cam)
    z = pts[:, 2]
    if np.any(z <= eps_z) or not np.all(np.isfinite(pts)):
        raise BehindCameraError(
            f"point depth must exceed {eps_z} (min z = {z.min() if len(z) else 'n/a'})"
        )
    out = np.empty_like(pts)
    out[:, 0] = k.fu * pts[:, 0] / z + k.cu
    out[:, 1] = k.fv * pts[:, 1] / z + k.cv
    out[:, 2] = k.fu * k.baseline_m / z
    return out[0] if single else out


def triangulate(
    k: StereoIntrinsics, obs: np.ndarray, min_disparity: float = DEFAULT_MIN_DISPARITY
) -> np.ndarray:
    """Invert the stereo model: (u, v, d) -> camera-frame point.

    Accepts one observation (3,) or a stack (n, 3).  Raises
    NearInfiniteDepthError if any disparity is <= min_disparity.
    """
    y, single = _as_points(obs)
    d = y[:, 2]
    if np.any(d <= min_disparity) or not np.all(np.isfinite(y)):
        raise NearInfiniteDepthError(
            f"disparity must exceed {min_disparity} px (min d = {d.min() if len(d) else 'n/a'})"
        )
    z = k.fu * k.baseline_m / d
    out = np.empty_like(y)
    out[:, 0] = (y[:, 0] - k.cu) * z / k.fu
    out[:, 1] = (y[:, 1] - k.cv) * z / k.fv
    out[:, 2] = z
    return out[0] if single else out


def project_jacobian(k: StereoIntrinsics, p_cam: np.ndarray) -> np.ndarray:
    """d(u, v, d) / d(x, y, z) at the given camera-frame point(s).

    Accepts (3,) -> (3, 3) or (n, 3) -> (n, 3, 3).  Points must be in front
    of the camera.
    """
    pts, single = _as_points(p_cam)
    z = pts[:, 2]
    if np.any(z <= DEFAULT_EPS_Z):
        raise BehindCameraError("Jacobian undefined at or behind the image plane")
    n = pts.shape[0]
    j = np.zeros((n, 3, 3))
    inv_z = 1.0 / z
    inv_z2 = inv_z * inv_z
    j[:, 0, 0] = k.fu * inv_z
    j[:, 0, 2] = -k.fu * pts[:, 0] * inv_z2
    j[:, 1, 1] = k.fv * inv_z
    j[:, 1, 2] = -k.fv * pts[:, 1] * inv_z2
    j[:, 2, 2] = -k.fu * k.baseline_m * inv_z2
    return j[0] if single else j


def _check_covariance(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (3, 3):
        raise ValueError("covariance must be 3x3")
    if not np.allclose(cov, cov.T, atol=1e-9):
        raise ValueError("covariance must be symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise ValueError("covariance must be positive definite") from e
    return cov


@dataclass(frozen=True)
class StereoObservation:
    """One (u, v, d) measurement with its noise covariance."""

    u: float
    v: float
    d: float
    cov: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        for name in ("u", "v", "d"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.d <= 0.0:
            raise ValueError(f"disparity must be positive, got {self.d}")
        if not all(np.isfinite([self.u, self.v, self.d])):
            raise ValueError("observation components must be finite")
        cov = _check_covariance(self.cov)
        cov = cov.copy()
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)

    @property
    def uvd(self) -> np.ndarray:
        return np.array([self.u, self.v, self.d])
