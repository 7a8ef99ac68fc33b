"""Frame-to-frame motion initialization.

Triangulates common tracks in two consecutive frames and aligns the point
clouds with three-point RANSAC; inliers are gated on the full (u, v, d)
reprojection error of the frame-k points predicted into frame k+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import DEFAULT_EPS_Z, DEFAULT_MIN_DISPARITY, StereoIntrinsics
from .geometry import Pose, Rotation
from .tracks import TrackTable

__all__ = [
    "DegenerateSampleError",
    "InitializationError",
    "RansacConfig",
    "align_three_points",
    "ransac_interframe",
]

# A minimal sample is degenerate when the triangle it spans has area below
# this (square meters), leaving rotation about the line unconstrained.
_MIN_TRIANGLE_AREA = 1e-9


class DegenerateSampleError(ValueError):
    """Sampled points are (near-)collinear; alignment is underdetermined."""


class InitializationError(RuntimeError):
    """RANSAC could not produce a model with enough inliers."""

    def __init__(self, frame: int, message: str):
        super().__init__(f"frame {frame}: {message}")
        self.frame = frame


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 200
    threshold_px: float = 2.0
    min_inliers: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.threshold_px <= 0.0:
            raise ValueError("threshold must be positive")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be >= 3")


def align_three_points(src: np.ndarray, dst: np.ndarray) -> Pose:
    """Closed-form rigid alignment mapping ``src`` points onto ``dst``.

    Centroid subtraction plus orthogonal Procrustes via SVD (Kabsch), with
    the determinant corrected to +1.  Works for any n >= 3 point pairs; for
    the minimal three-point sample a near-collinear configuration raises
    DegenerateSampleError.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3 or src.shape[0] < 3:
        raise ValueError("need matching (n, 3) arrays with n >= 3")
    if src.shape[0] == 3:
        area = 0.5 * np.linalg.norm(np.cross(src[1] - src[0], src[2] - src[0]))
        if area <= _MIN_TRIANGLE_AREA:
            raise DegenerateSampleError(f"sample triangle area {area:.3e} m^2")
    c_src = src.mean(axis=0)
    c_dst = dst.mean(axis=0)
    h = (src - c_src).T @ (dst - c_dst)
    u, s, vt = np.linalg.svd(h)
    if s[0] < 1e-12 or s[1] < 1e-9 * s[0]:
        raise DegenerateSampleError("point set is rank deficient (collinear)")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    rotation = Rotation(r, _trusted=True)
    return Pose(rotation, c_dst - rotation.apply(c_src))


def _project_batch(k: StereoIntrinsics, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection with a validity mask instead of exceptions."""
    z = pts[..., 2]
    valid = z > DEFAULT_EPS_Z
    zs = np.where(valid, z, 1.0)
    uvd = np.empty_like(pts)
    uvd[..., 0] = k.fu * pts[..., 0] / zs + k.cu
    uvd[..., 1] = k.fv * pts[..., 1] / zs + k.cv
    uvd[..., 2] = k.fu * k.baseline_m / zs
    return uvd, valid


def _orthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def ransac_interframe(
    tracks: TrackTable, frame: int, k: StereoIntrinsics, cfg: RansacConfig
) -> tuple[Pose, list[int]]:
    """Estimate T_{k+1,k} between ``frame`` and ``frame + 1``.

    Hypotheses come from rigid alignment of triangulated three-point samples;
    consensus counts tracks whose frame-(k+1) reprojection error is at or
    below the threshold.  The best model (ties broken by lowest iteration
    index) is refit on its inliers and the inlier set re-evaluated under the
    refit pose.  Sampling indexes a sorted track-id list, so the result is
    deterministic given the seed and invariant to track-id permutation.

    Returns the pose and the sorted inlier track ids.
    """
    ids = tracks.common_tracks(frame, frame + 1)
    # Tracks must triangulate in both frames to participate.
    usable = []
    y_src = []
    y_dst = []
    for tid in ids:
        o0 = tracks.observation(tid, frame)
        o1 = tracks.observation(tid, frame + 1)
        if o0.d > DEFAULT_MIN_DISPARITY and o1.d > DEFAULT_MIN_DISPARITY:
            usable.append(tid)
            y_src.append(o0.uvd)
            y_dst.append(o1.uvd)
    n = len(usable)
    needed = max(3, cfg.min_inliers)
    if n < needed:
        raise InitializationError(
            frame, f"only {n} usable common tracks, need >= {needed}"
        )
    y_src = np.asarray(y_src)
    y_dst = np.asarray(y_dst)

    def triangulate_batch(y: np.ndarray) -> np.ndarray:
        z = k.fu * k.baseline_m / y[:, 2]
        return np.stack(
            [(y[:, 0] - k.cu) * z / k.fu, (y[:, 1] - k.cv) * z / k.fv, z], axis=1
        )

    src = triangulate_batch(y_src)
    dst = triangulate_batch(y_dst)

    rng = np.random.default_rng(cfg.seed)
    samples = np.empty((cfg.iterations, 3), dtype=int)
    for i in range(cfg.iterations):
        samples[i] = rng.choice(n, size=3, replace=False)

    # Batched Kabsch over all hypotheses.
    a = src[samples]  # (it, 3, 3)
    b = dst[samples]
    ca = a.mean(axis=1, keepdims=True)
    cb = b.mean(axis=1, keepdims=True)
    h = np.einsum("nij,nik->njk", a - ca, b - cb)
    u, s, vt = np.linalg.svd(h)
    det = np.linalg.det(np.einsum("nji,nkj->nik", vt, u))
    flip = np.repeat(np.eye(3)[None, :, :], cfg.iterations, axis=0)
    flip[:, 2, 2] = np.sign(det)
    r_all = np.einsum("nji,njk,nlk->nil", vt, flip, u)
    t_all = cb[:, 0, :] - np.einsum("nij,nj->ni", r_all, ca[:, 0, :])
    degenerate = s[:, 1] <= 1e-9 * np.maximum(s[:, 0], 1e-300)

    # Classify every track under every hypothesis.
    pred = np.einsum("nij,mj->nmi", r_all, src) + t_all[:, None, :]
    uvd, valid = _project_batch(k, pred)
    err = np.linalg.norm(uvd - y_dst[None, :, :], axis=2)
    inlier_mask = (err <= cfg.threshold_px) & valid
    counts = inlier_mask.sum(axis=1)
    counts[degenerate] = -1

    best = int(np.argmax(counts))  # argmax takes the lowest index on ties
    if counts[best] < cfg.min_inliers:
        raise InitializationError(
            frame,
            f"best hypothesis has {max(int(counts[best]), 0)} inliers, "
            f"need >= {cfg.min_inliers}",
        )

    # Final pose: closed-form alignment re-estimated over the winning
    # consensus, then one classification pass under the refit pose so the
    # returned labels are consistent with the returned pose (every returned
    # inlier reprojects within threshold under the returned pose).  The
    # min-inlier gate applies to the hypothesis consensus only.  A
    # degenerate consensus (collinear points) falls back to the
    # minimal-sample hypothesis.
    consensus = inlier_mask[best]
    try:
        final_pose = align_three_points(src[consensus], dst[consensus])
    except DegenerateSampleError:
        final_pose = Pose(Rotation.from_matrix(_orthonormalize(r_all[best])), t_all[best])
    pred = src @ final_pose.rotation.matrix.T + final_pose.translation
    uvd, valid = _project_batch(k, pred)
    err = np.linalg.norm(uvd - y_dst, axis=1)
    final_mask = (err <= cfg.threshold_px) & valid
    inlier_ids = [usable[i] for i in np.flatnonzero(final_mask)]
    return final_pose, inlier_ids
