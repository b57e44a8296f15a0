"""Per-robot adaptive weights for the anchor alignment.

Three cues are averaged over each anchor epoch and normalized across the
team: a velocity weight (how long image features stay usable given the
feature depth), a rotation weight (how fast the camera field of view is
being consumed), and a range-consistency weight (how well world-frame
inter-robot distances agree with the range-only structure). The weights
scale the alignment residuals when the structure is registered into the
world frame, so trustworthy robots dominate the anchor placement.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import RigidPose


@dataclass(frozen=True)
class CameraFov:
    """Horizontal/vertical field of view in radians."""

    theta_h: float
    theta_v: float

    def __post_init__(self):
        if not (0.0 < self.theta_v <= self.theta_h < np.pi):
            raise ValueError("field of view must satisfy 0 < theta_v <= theta_h < pi")


@dataclass(frozen=True)
class OdomSample:
    """Per-step odometry bundle used by the weight computation.

    velocity is in the camera/body frame (+x forward), rates are the
    absolute yaw/pitch rates in rad/s, feature_depth is the representative
    scene depth l in meters.
    """

    robot: int
    step: int
    pose: RigidPose
    velocity: np.ndarray
    yaw_rate: float
    pitch_rate: float
    feature_depth: float

    def __post_init__(self):
        v = np.array(self.velocity, dtype=float)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError("velocity must be a finite 3-vector")
        v.setflags(write=False)
        object.__setattr__(self, "velocity", v)


@dataclass(frozen=True)
class WeightSet:
    """Raw + normalized weights for all robots at one anchor epoch."""

    epoch: int
    step: int
    w_v: np.ndarray
    w_a: np.ndarray
    w_r: np.ndarray
    wv_norm: np.ndarray
    wa_norm: np.ndarray
    wr_norm: np.ndarray
    total: np.ndarray

    def __post_init__(self):
        for name in ("w_v", "w_a", "w_r", "wv_norm", "wa_norm", "wr_norm", "total"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def epoch_length(step_k: int, step_km1: int) -> int:
    """Number of pipeline steps in the epoch (tau_{k-1}, tau_k]."""
    m = int(step_k) - int(step_km1)
    if m <= 0:
        raise ValueError("epoch end must come after its start")
    return m


def velocity_weight(samples, dt: float) -> float:
    """Feature-persistence weight, averaged over the epoch's samples.

    Per sample, with depth l and body velocity (vx, vy, vz):

        (max(l - max(vx, 0) dt, 0) / l)^2
        + max(l - |vy| dt, 0) / l + max(l - |vz| dt, 0) / l

    Only forward x-motion consumes features; the x term is squared.
    Result lies in [0, 3].
    """
    if len(samples) == 0:
        raise ValueError("empty epoch")
    total = 0.0
    for s in samples:
        l = s.feature_depth
        if not (l > 0.0):
            raise ValueError("feature depth must be positive")
        vx, vy, vz = s.velocity
        term_x = max(l - max(vx, 0.0) * dt, 0.0) / l
        term_y = max(l - abs(vy) * dt, 0.0) / l
        term_z = max(l - abs(vz) * dt, 0.0) / l
        total += term_x**2 + term_y + term_z
    return total / len(samples)


def rotation_weight(samples, fov: CameraFov, dt: float) -> float:
    """Field-of-view retention weight, averaged over the epoch's samples.

    Per sample: max(theta_h - |w_h| dt, 0)/theta_h * max(theta_v - |w_v| dt, 0)/theta_v.
    Result lies in [0, 1].
    """
    if len(samples) == 0:
        raise ValueError("empty epoch")
    total = 0.0
    for s in samples:
        horiz = max(fov.theta_h - abs(s.yaw_rate) * dt, 0.0) / fov.theta_h
        vert = max(fov.theta_v - abs(s.pitch_rate) * dt, 0.0) / fov.theta_v
        total += horiz * vert
    return total / len(samples)


def consistency_weight(world_positions, structure_distances, robot: int,
                       eps: float = 1e-6) -> float:
    """Agreement between world-frame distances and the structure distances.

    world_positions: (m, n, 3) world position estimates over the epoch's
    steps; structure_distances: (n, n) pairwise distances of the most
    recent accepted structure, held constant across the epoch. Only pairs
    containing `robot` contribute. Larger means more consistent.
    """
    pos = np.asarray(world_positions, dtype=float)
    if pos.ndim != 3 or pos.shape[2] != 3:
        raise ValueError("world positions must have shape (m, n, 3)")
    m, n = pos.shape[0], pos.shape[1]
    if m == 0:
        raise ValueError("empty epoch")
    d_ref = np.asarray(structure_distances, dtype=float)
    if d_ref.shape != (n, n):
        raise ValueError("structure distance matrix does not match positions")
    if not 0 <= robot < n:
        raise ValueError("robot index out of range")
    diff = pos - pos[:, robot : robot + 1, :]
    d = np.sqrt((diff**2).sum(axis=2))  # (m, n) distances to `robot`
    others = [j for j in range(n) if j != robot]
    ref = d_ref[robot, others]
    contrib = ref[None, :] / (np.abs(d[:, others] - ref[None, :]) + eps)
    return float(contrib.sum() / m)


def normalize_and_total(w_v, w_a, w_r, epoch: int = 0, step: int = 0) -> WeightSet:
    """Normalize each weight type by its max over robots and sum the three.

    An all-zero weight type normalizes to all zeros rather than dividing
    by zero. total = wa_norm + wv_norm + wr_norm, one entry per robot.
    """
    w_v = np.asarray(w_v, dtype=float)
    w_a = np.asarray(w_a, dtype=float)
    w_r = np.asarray(w_r, dtype=float)
    if not (w_v.shape == w_a.shape == w_r.shape) or w_v.ndim != 1:
        raise ValueError("weight arrays must be 1-D and aligned")
    if np.any(w_v < 0) or np.any(w_a < 0) or np.any(w_r < 0):
        raise ValueError("raw weights must be non-negative")

    def norm(w):
        top = w.max() if w.size else 0.0
        return w / top if top > 0.0 else np.zeros_like(w)

    wv_n, wa_n, wr_n = norm(w_v), norm(w_a), norm(w_r)
    return WeightSet(
        epoch=epoch,
        step=step,
        w_v=w_v,
        w_a=w_a,
        w_r=w_r,
        wv_norm=wv_n,
        wa_norm=wa_n,
        wr_norm=wr_n,
        total=wa_n + wv_n + wr_n,
    )
