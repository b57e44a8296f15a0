"""Rigid-body geometry primitives shared by the localization stack.

Conventions used throughout the package:

- 3-vectors are float64 numpy arrays of shape (3,), in meters.
- Rotations are 3x3 orthonormal matrices with determinant +1.
- Quaternions are scalar-first (qw, qx, qy, qz) and unit norm.
- Time lives on a fixed step grid: an integer step index times dt.
  Integer steps are the canonical representation; seconds are derived.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

# Tolerance on R^T R = I and det R = 1 for pose validation.
ORTHONORMAL_TOL = 1e-9


def vec3(x, y, z):
    """Build a float64 3-vector."""
    return np.array([x, y, z], dtype=float)


def as_vec3(v) -> np.ndarray:
    """Coerce to a finite float64 (3,) array."""
    out = np.asarray(v, dtype=float)
    if out.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("vector has non-finite entries")
    return out


def so3_hat(w) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector: hat(w) @ v == cross(w, v)."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues formula: rotation matrix for a rotation vector."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    K = so3_hat(w)
    if theta < 1e-10:
        # second-order series keeps orthonormality to machine precision here
        return np.eye(3) + K + 0.5 * (K @ K)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R) -> np.ndarray:
    """Rotation vector of a rotation matrix (inverse of so3_exp)."""
    R = np.asarray(R, dtype=float)
    trace = float(np.trace(R))
    cos_theta = max(-1.0, min(1.0, (trace - 1.0) / 2.0))
    theta = math.acos(cos_theta)
    if theta < 1e-10:
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta > math.pi - 1e-6:
        # near pi the antisymmetric part vanishes; recover the axis from the
        # dominant diagonal entry of R + I
        A = R + np.eye(3)
        k = int(np.argmax(np.diag(A)))
        axis = A[:, k] / math.sqrt(2.0 * A[k, k])
        axis = axis / np.linalg.norm(axis)
        # fix the sign with the antisymmetric remainder when available
        w_small = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.dot(w_small, axis) < 0.0:
            axis = -axis
        return theta * axis
    factor = theta / (2.0 * math.sin(theta))
    return factor * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])


def rot_x(angle) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_to_quaternion(R) -> np.ndarray:
    """Scalar-first unit quaternion (qw >= 0) for a rotation matrix."""
    R = np.asarray(R, dtype=float)
    q = np.empty(4)
    trace = R[0, 0] + R[1, 1] + R[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (R[2, 1] - R[1, 2]) / s
        q[2] = (R[0, 2] - R[2, 0]) / s
        q[3] = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q[0] = (R[2, 1] - R[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (R[0, 1] + R[1, 0]) / s
        q[3] = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q[0] = (R[0, 2] - R[2, 0]) / s
        q[1] = (R[0, 1] + R[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q[0] = (R[1, 0] - R[0, 1]) / s
        q[1] = (R[0, 2] + R[2, 0]) / s
        q[2] = (R[1, 2] + R[2, 1]) / s
        q[3] = 0.25 * s
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def quaternion_to_rotation(q) -> np.ndarray:
    """Rotation matrix of a scalar-first quaternion (normalized internally)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError("quaternion must have 4 components")
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("quaternion has zero or non-finite norm")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class Timestamp:
    """A point on the pipeline's step grid. Seconds are derived, not stored."""

    step: int
    dt: float

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("step must be non-negative")
        if not (self.dt > 0.0):
            raise ValueError("dt must be positive")

    @property
    def seconds(self) -> float:
        return self.step * self.dt


@dataclass(frozen=True)
class RigidPose:
    """An SE(3) element stored as rotation matrix + translation vector.

    Instances are immutable: arrays are copied in and marked read-only.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose has non-finite entries")
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"rotation is not orthonormal (|R^T R - I| = {err:.3e})")
        if abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation determinant is not +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        """Transform one (3,) point or an (n, 3) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def matrix3x4(self) -> np.ndarray:
        """The [R | t] block used by the Frobenius pose distance."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def renormalized(self) -> "RigidPose":
        """Project the rotation back onto SO(3) via SVD (explicit cleanup
        step for long compose chains)."""
        U, _, Vt = np.linalg.svd(self.rotation)
        D = np.diag([1.0, 1.0, float(np.sign(np.linalg.det(U @ Vt)))])
        return RigidPose(U @ D @ Vt, self.translation)


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """a then b applied in a's frame: result maps x -> a(b(x))."""
    return RigidPose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: RigidPose) -> RigidPose:
    return RigidPose(p.rotation.T, -(p.rotation.T @ p.translation))


def frobenius_pose_distance(a: RigidPose, b: RigidPose) -> float:
    """Frobenius norm of the difference of the 3x4 [R | t] blocks."""
    return float(np.linalg.norm(a.matrix3x4() - b.matrix3x4()))


@dataclass(frozen=True)
class Trajectory:
    """A pose sequence on the step grid.

    steps: (n,) strictly increasing integer step indices
    rotations: (n, 3, 3), translations: (n, 3), dt: grid spacing in seconds
    """

    steps: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    dt: float

    def __post_init__(self):
        steps = np.array(self.steps, dtype=np.int64)
        R = np.array(self.rotations, dtype=float)
        t = np.array(self.translations, dtype=float)
        if steps.ndim != 1 or len(steps) == 0:
            raise ValueError("trajectory must contain at least one pose")
        n = len(steps)
        if R.shape != (n, 3, 3) or t.shape != (n, 3):
            raise ValueError("inconsistent trajectory array shapes")
        if n > 1 and not np.all(np.diff(steps) > 0):
            raise ValueError("trajectory steps must be strictly increasing")
        if not (self.dt > 0.0):
            raise ValueError("dt must be positive")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("trajectory has non-finite entries")
        for arr in (steps, R, t):
            arr.setflags(write=False)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "rotations", R)
        object.__setattr__(self, "translations", t)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def positions(self) -> np.ndarray:
        return self.translations

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.dt

    def pose(self, index: int) -> RigidPose:
        return RigidPose(self.rotations[index], self.translations[index])

    @classmethod
    def from_poses(cls, steps, poses, dt) -> "Trajectory":
        rotations = np.stack([p.rotation for p in poses])
        translations = np.stack([p.translation for p in poses])
        return cls(np.asarray(steps), rotations, translations, dt)

    def transformed(self, pose: RigidPose) -> "Trajectory":
        """Apply a fixed rigid transform on the left of every pose."""
        R = np.einsum("ab,nbc->nac", pose.rotation, self.rotations)
        t = self.translations @ pose.rotation.T + pose.translation
        return Trajectory(self.steps, R, t, self.dt)

    def write_csv(self, path) -> None:
        """Write rows of step,t,x,y,z,qw,qx,qy,qz."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "t", "x", "y", "z", "qw", "qx", "qy", "qz"])
            for k in range(len(self)):
                q = rotation_to_quaternion(self.rotations[k])
                row = [int(self.steps[k]), _fmt(self.steps[k] * self.dt)]
                row += [_fmt(v) for v in self.translations[k]]
                row += [_fmt(v) for v in q]
                writer.writerow(row)

    @classmethod
    def read_csv(cls, path, dt=None) -> "Trajectory":
        steps, translations, rotations = [], [], []
        t_values = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                steps.append(int(row["step"]))
                t_values.append(float(row["t"]))
                translations.append([float(row[c]) for c in ("x", "y", "z")])
                q = np.array([float(row[c]) for c in ("qw", "qx", "qy", "qz")])
                rotations.append(quaternion_to_rotation(q))
        if not steps:
            raise ValueError(f"empty trajectory file: {path}")
        if dt is None:
            dt = _infer_dt(steps, t_values)
        return cls(np.asarray(steps), np.stack(rotations), np.stack(translations), dt)


def _infer_dt(steps, t_values) -> float:
    for s, t in zip(steps, t_values):
        if s > 0:
            return t / s
    return 1.0


def _fmt(value) -> str:
    """17-significant-digit decimal string (round-trips float64 exactly)."""
    return format(float(value), ".17g")
