"""Geometry primitives: poses, rotations, trajectories, CSV round-trips."""

import math

import numpy as np
import pytest

from swarmloc.geometry import (RigidPose, Timestamp, Trajectory, compose,
                               frobenius_pose_distance, inverse,
                               quaternion_to_rotation, rot_z,
                               rotation_to_quaternion, so3_exp, so3_log, vec3)

from conftest import random_pose, random_rotation


def test_vec3_and_validation():
    v = vec3(1, 2, 3)
    assert v.dtype == float and v.shape == (3,)


def test_so3_exp_log_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(200):
        w = rng.uniform(-1.0, 1.0, 3) * rng.uniform(0.0, math.pi - 0.05)
        R = so3_exp(w)
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
        assert abs(np.linalg.det(R) - 1.0) < 1e-12
        w_back = so3_log(R)
        assert np.allclose(so3_exp(w_back), R, atol=1e-9)


def test_so3_log_near_pi():
    R = rot_z(math.pi)
    w = so3_log(R)
    assert abs(np.linalg.norm(w) - math.pi) < 1e-9
    assert np.allclose(so3_exp(w), R, atol=1e-9)


def test_so3_exp_small_angle():
    R = so3_exp([1e-12, 0.0, 0.0])
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-15


class TestRigidPose:
    def test_identity(self):
        p = RigidPose.identity()
        assert np.array_equal(p.rotation, np.eye(3))
        assert np.array_equal(p.translation, np.zeros(3))

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            RigidPose(np.eye(3) * 1.01, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError, match="determinant"):
            RigidPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            RigidPose(np.eye(3), [np.nan, 0.0, 0.0])

    def test_arrays_are_immutable(self):
        p = RigidPose.identity()
        with pytest.raises(ValueError):
            p.translation[0] = 1.0

    def test_apply_point_and_batch(self):
        p = RigidPose(rot_z(math.pi / 2.0), vec3(1.0, 0.0, 0.0))
        out = p.apply(vec3(1.0, 0.0, 0.0))
        assert np.allclose(out, [1.0, 1.0, 0.0], atol=1e-12)
        batch = p.apply(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        assert batch.shape == (2, 3)
        assert np.allclose(batch[1], [0.0, 0.0, 0.0], atol=1e-12)

    def test_renormalized_after_long_chain(self):
        rng = np.random.default_rng(6)
        pose = RigidPose.identity()
        step = RigidPose(so3_exp(rng.uniform(-0.02, 0.02, 3)), rng.uniform(-0.1, 0.1, 3))
        for _ in range(5000):
            pose = compose(pose, step)
        R = pose.renormalized().rotation
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9


def test_compose_inverse_identity():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = random_pose(rng)
        ident = compose(p, inverse(p))
        assert np.abs(ident.rotation - np.eye(3)).max() < 1e-12
        assert np.abs(ident.translation).max() < 1e-12


def test_compose_associative():
    rng = np.random.default_rng(8)
    for _ in range(100):
        a, b, c = (random_pose(rng) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert frobenius_pose_distance(left, right) < 1e-10


def test_frobenius_distance_examples():
    p = random_pose(np.random.default_rng(9))
    assert frobenius_pose_distance(p, p) == 0.0
    ident = RigidPose.identity()
    shifted = RigidPose(np.eye(3), vec3(3.0, 4.0, 0.0))
    assert abs(frobenius_pose_distance(ident, shifted) - 5.0) < 1e-12
    half_turn = RigidPose(rot_z(math.pi), np.zeros(3))
    assert abs(frobenius_pose_distance(ident, half_turn) - math.sqrt(8.0)) < 1e-12


def test_frobenius_distance_metric_properties():
    rng = np.random.default_rng(10)
    for _ in range(100):
        a, b, c = (random_pose(rng) for _ in range(3))
        dab = frobenius_pose_distance(a, b)
        assert abs(dab - frobenius_pose_distance(b, a)) < 1e-10
        assert dab <= frobenius_pose_distance(a, c) + frobenius_pose_distance(c, b) + 1e-10


def test_quaternion_roundtrip():
    rng = np.random.default_rng(11)
    for _ in range(200):
        R = random_rotation(rng)
        q = rotation_to_quaternion(R)
        assert q[0] >= 0.0  # canonical hemisphere
        assert abs(np.linalg.norm(q) - 1.0) < 1e-12
        assert np.abs(quaternion_to_rotation(q) - R).max() < 1e-9


def test_quaternion_is_scalar_first():
    q = rotation_to_quaternion(rot_z(math.pi / 2.0))
    half = math.sqrt(0.5)
    assert np.allclose(q, [half, 0.0, 0.0, half], atol=1e-12)


def test_quaternion_validation():
    with pytest.raises(ValueError):
        quaternion_to_rotation([0.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        quaternion_to_rotation([1.0, 0.0, 0.0])


def test_timestamp():
    ts = Timestamp(step=25, dt=0.1)
    assert ts.seconds == pytest.approx(2.5)
    with pytest.raises(ValueError):
        Timestamp(step=-1, dt=0.1)
    with pytest.raises(ValueError):
        Timestamp(step=0, dt=0.0)


class TestTrajectory:
    def _simple(self, n=5, dt=0.1):
        steps = np.arange(n)
        rotations = np.stack([np.eye(3)] * n)
        translations = np.stack([vec3(float(k), 0.0, 0.0) for k in range(n)])
        return Trajectory(steps, rotations, translations, dt)

    def test_basic_accessors(self):
        traj = self._simple()
        assert len(traj) == 5
        assert np.allclose(traj.times, [0.0, 0.1, 0.2, 0.3, 0.4])
        assert np.array_equal(traj.positions, traj.translations)
        pose = traj.pose(2)
        assert np.allclose(pose.translation, [2.0, 0.0, 0.0])

    def test_rejects_non_increasing_steps(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            Trajectory(np.array([0, 2, 1]), np.stack([np.eye(3)] * 3),
                       np.zeros((3, 3)), 0.1)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros(0, dtype=int), np.zeros((0, 3, 3)), np.zeros((0, 3)), 0.1)

    def test_from_poses_roundtrip(self):
        rng = np.random.default_rng(12)
        poses = [random_pose(rng) for _ in range(4)]
        traj = Trajectory.from_poses([0, 1, 2, 3], poses, 0.1)
        for k, p in enumerate(poses):
            assert frobenius_pose_distance(traj.pose(k), p) < 1e-12

    def test_transformed(self):
        rng = np.random.default_rng(13)
        traj = self._simple()
        T = random_pose(rng)
        moved = traj.transformed(T)
        for k in range(len(traj)):
            expected = compose(T, traj.pose(k))
            assert frobenius_pose_distance(moved.pose(k), expected) < 1e-12

    def test_csv_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(14)
        poses = [random_pose(rng) for _ in range(6)]
        traj = Trajectory.from_poses(np.arange(6), poses, 0.1)
        path = tmp_path / "traj.csv"
        traj.write_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "step,t,x,y,z,qw,qx,qy,qz"
        back = Trajectory.read_csv(path)
        assert back.dt == pytest.approx(0.1)
        assert np.array_equal(back.steps, traj.steps)
        # translations round-trip exactly (17 significant digits)
        assert np.array_equal(back.translations, traj.translations)
        assert np.abs(back.rotations - traj.rotations).max() < 1e-9

    def test_read_rejects_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("step,t,x,y,z,qw,qx,qy,qz\n")
        with pytest.raises(ValueError, match="empty"):
            Trajectory.read_csv(path)
