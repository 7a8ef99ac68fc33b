"""Trajectory accuracy metrics: ARMSE and final drift.

Errors are absolute (no alignment step): estimate and ground truth share the
anchored first pose, so frame k is compared directly against frame k.  The
East-North variants drop the vertical (z) component to isolate planar drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pipeline import Trajectory

__all__ = [
    "MetricsAlignmentError",
    "TrajectoryMetrics",
    "armse",
    "final_drift",
    "path_length",
    "evaluate",
]


class MetricsAlignmentError(ValueError):
    """Estimate and ground truth do not cover the same frames."""


@dataclass(frozen=True)
class TrajectoryMetrics:
    """Summary metrics for one estimated trajectory against ground truth."""

    trans_armse_m: float
    trans_armse_en_m: float
    rot_armse_rad: float
    final_drift_m: float
    final_drift_pct: float
    final_drift_en_m: float
    final_drift_en_pct: float

    def __post_init__(self):
        fields = (
            self.trans_armse_m,
            self.trans_armse_en_m,
            self.rot_armse_rad,
            self.final_drift_m,
            self.final_drift_pct,
            self.final_drift_en_m,
            self.final_drift_en_pct,
        )
        if any(not math.isfinite(v) or v < 0.0 for v in fields):
            raise ValueError("metrics must be finite and non-negative")
        if self.trans_armse_en_m > self.trans_armse_m + 1e-12:
            raise ValueError("EN ARMSE cannot exceed the 3D ARMSE")
        if self.final_drift_en_m > self.final_drift_m + 1e-12:
            raise ValueError("EN drift cannot exceed the 3D drift")


def _check_aligned(est: Trajectory, truth: Trajectory) -> None:
    if len(est) != len(truth):
        raise MetricsAlignmentError(
            f"estimate has {len(est)} poses, ground truth has {len(truth)}"
        )
    dt = np.abs(np.asarray(est.timestamps) - np.asarray(truth.timestamps))
    if dt.size and float(dt.max()) > 1e-9:
        raise MetricsAlignmentError("timestamps differ between estimate and ground truth")


def armse(est: Trajectory, truth: Trajectory) -> tuple[float, float, float]:
    """(3D translation, East-North translation, rotation) ARMSE.

    Translation terms are root-mean-square position errors in meters;
    rotation is the root-mean-square geodesic angle in radians.
    """
    _check_aligned(est, truth)
    d = est.positions() - truth.positions()
    trans = float(np.sqrt(np.mean(np.sum(d * d, axis=1))))
    trans_en = float(np.sqrt(np.mean(np.sum(d[:, :2] * d[:, :2], axis=1))))
    angles = [
        e.rotation.angle_to(t.rotation) for e, t in zip(est.poses, truth.poses)
    ]
    rot = float(np.sqrt(np.mean(np.square(angles))))
    return trans, trans_en, rot


def path_length(truth: Trajectory) -> float:
    """Chordal length of the ground-truth path in meters."""
    p = truth.positions()
    if len(p) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def final_drift(
    est: Trajectory, truth: Trajectory, path_length_m: float
) -> tuple[float, float, float, float]:
    """Final-pose position error: (3D m, 3D %, EN m, EN %) of path length."""
    _check_aligned(est, truth)
    if path_length_m <= 0.0:
        raise ValueError("path length must be positive")
    d = est.poses[-1].translation - truth.poses[-1].translation
    drift = float(np.linalg.norm(d))
    drift_en = float(np.linalg.norm(d[:2]))
    return (
        drift,
        100.0 * drift / path_length_m,
        drift_en,
        100.0 * drift_en / path_length_m,
    )


def evaluate(est: Trajectory, truth: Trajectory) -> TrajectoryMetrics:
    """All metrics in one call, using the ground-truth path length."""
    trans, trans_en, rot = armse(est, truth)
    drift, pct, drift_en, pct_en = final_drift(est, truth, path_length(truth))
    return TrajectoryMetrics(trans, trans_en, rot, drift, pct, drift_en, pct_en)
