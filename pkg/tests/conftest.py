"""Shared helpers for the test suite.

Randomized tests draw from seeded numpy Generators so every run sees the
same data; helpers here build the random rotations and well-spread point
clouds that several modules need.
"""

import numpy as np
import pytest

from swarmloc.geometry import RigidPose, so3_exp


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish random rotation from a random rotation vector."""
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.pi)
    return so3_exp(angle * axis)


def random_pose(rng, span=5.0) -> RigidPose:
    return RigidPose(random_rotation(rng), rng.uniform(-span, span, 3))


def random_formation(rng, n, span=5.0, min_thickness=0.5) -> np.ndarray:
    """Random well-conditioned (non-coplanar) robot positions.

    Rejection-samples until the centered cloud's smallest singular value
    clears min_thickness, so structure estimation and alignment never see
    a degenerate geometry by accident.
    """
    while True:
        pts = rng.uniform(-span, span, (n, 3))
        centered = pts - pts.mean(axis=0)
        svals = np.linalg.svd(centered, compute_uv=False)
        if svals[2] > min_thickness:
            return pts


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
