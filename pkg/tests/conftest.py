"""Shared fixtures and helpers for the test suite."""

import math

import numpy as np
import pytest

from sunvo import Pose, Rotation, StereoIntrinsics


@pytest.fixture
def k_hand():
    """Small rig with round numbers for hand-checkable projections."""
    return StereoIntrinsics(fu=100.0, fv=100.0, cu=50.0, cv=50.0, baseline_m=0.5)


@pytest.fixture
def k_rig():
    """Driving-scale rig used by the synthetic scene tests."""
    return StereoIntrinsics(fu=500.0, fv=500.0, cu=320.0, cv=240.0, baseline_m=0.54)


def random_rotation(rng: np.random.Generator, max_angle: float = math.pi - 0.1) -> Rotation:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    return Rotation.exp(angle * axis)


def random_pose(rng: np.random.Generator, trans_scale: float = 5.0) -> Pose:
    return Pose(random_rotation(rng), trans_scale * rng.standard_normal(3))
