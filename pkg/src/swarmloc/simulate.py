"""Deterministic synthetic data generation.

Ground-truth paths are parametric (circle, lawnmower, lissajous, waypoint
list, stationary), optionally overlaid with a slow per-robot orbit, and
sampled on the dt grid with yaw following the motion direction. VIO is
simulated by corrupting true body-frame increments with
per-axis scale error, along-track drift, white translation noise, and a
rotation random walk. UWB ranges are true distances plus Gaussian noise
and occasional positive NLOS bias. Everything is driven by numpy
Generators spawned from the scenario seed, so a (config, seed) pair
reproduces the exact same streams.
"""

import math
from typing import NamedTuple

import numpy as np

from .config import ScenarioConfig, TrajectorySpec, VioParams, UwbParams
from .geometry import RigidPose, Trajectory, compose, rot_z, so3_exp, so3_log
from .ranging import RawRange
from .weights import OdomSample

MIN_SEPARATION = 1.0


def _polyline_positions(points, speed, n_steps, dt):
    """Constant-speed travel along a polyline, holding at the end."""
    pts = np.asarray(points, dtype=float)
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    if np.any(seg_len == 0.0):
        raise ValueError("waypoint path has zero-length segments")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    s = np.minimum(np.arange(n_steps + 1) * dt * speed, total)
    idx = np.minimum(np.searchsorted(cum, s, side="right") - 1, len(seg_len) - 1)
    frac = (s - cum[idx]) / seg_len[idx]
    return pts[idx] + frac[:, None] * seg[idx]


def _orbit_offsets(orbit: dict, n_steps: int, dt: float) -> np.ndarray:
    """Circular offset superimposed on a base path.

    off(t) = cos(theta) * e1 + sin(theta) * e2 with theta = 2*pi*t/period
    + phase. With e1 ⟂ e2 and |e1| = |e2| this is a circle in the plane
    they span, so a team whose members share one period and phase rotates
    rigidly: pairwise distances are untouched while every robot still
    sweeps a world-frame arc.
    """
    period = float(orbit["period"])
    if period <= 0:
        raise ValueError("orbit needs a positive period")
    e1 = np.asarray(orbit["e1"], dtype=float)
    e2 = np.asarray(orbit["e2"], dtype=float)
    if e1.shape != (3,) or e2.shape != (3,):
        raise ValueError("orbit axes e1 and e2 must be 3-vectors")
    phase = float(orbit.get("phase", 0.0))
    theta = 2.0 * math.pi / period * np.arange(n_steps + 1) * dt + phase
    return np.outer(np.cos(theta), e1) + np.outer(np.sin(theta), e2)


def _positions_for(spec: TrajectorySpec, n_steps: int, dt: float) -> np.ndarray:
    base = _base_positions_for(spec, n_steps, dt)
    orbit = spec.params.get("orbit")
    if orbit:
        base = base + _orbit_offsets(orbit, n_steps, dt)
    return base


def _base_positions_for(spec: TrajectorySpec, n_steps: int, dt: float) -> np.ndarray:
    p = spec.params
    t = np.arange(n_steps + 1) * dt
    if spec.kind == "stationary":
        pos = np.asarray(p.get("position", [0.0, 0.0, 0.0]), dtype=float)
        return np.tile(pos, (n_steps + 1, 1))
    if spec.kind == "circle":
        center = np.asarray(p.get("center", [0.0, 0.0, 0.0]), dtype=float)
        radius = float(p["radius"])
        speed = float(p["speed"])
        phase = float(p.get("phase", 0.0))
        if radius <= 0 or speed <= 0:
            raise ValueError("circle needs positive radius and speed")
        angle = speed / radius * t + phase
        out = np.tile(center, (n_steps + 1, 1))
        out[:, 0] += radius * np.cos(angle)
        out[:, 1] += radius * np.sin(angle)
        return out
    if spec.kind == "lissajous":
        center = np.asarray(p.get("center", [0.0, 0.0, 0.0]), dtype=float)
        amp = np.asarray(p.get("amplitude", [10.0, 10.0, 1.0]), dtype=float)
        omega = np.asarray(p.get("omega", [0.11, 0.17, 0.05]), dtype=float)
        phase = np.asarray(p.get("phase", [0.0, 0.5 * math.pi, 0.0]), dtype=float)
        return center[None, :] + amp[None, :] * np.sin(np.outer(t, omega) + phase[None, :])
    if spec.kind == "lawnmower":
        origin = np.asarray(p.get("origin", [0.0, 0.0, 0.0]), dtype=float)
        leg = float(p["leg_length"])
        spacing = float(p["spacing"])
        legs = int(p["legs"])
        speed = float(p["speed"])
        if legs < 1 or leg <= 0 or spacing <= 0 or speed <= 0:
            raise ValueError("lawnmower needs positive legs, lengths, and speed")
        points = [origin.copy()]
        for k in range(legs):
            x_end = leg if k % 2 == 0 else 0.0
            points.append(origin + [x_end, k * spacing, 0.0])
            if k < legs - 1:
                points.append(origin + [x_end, (k + 1) * spacing, 0.0])
        return _polyline_positions(points, speed, n_steps, dt)
    if spec.kind == "waypoints":
        points = p.get("points", [])
        if len(points) < 2:
            raise ValueError("waypoint trajectories need at least 2 points")
        return _polyline_positions(points, float(p["speed"]), n_steps, dt)
    raise ValueError(f"unknown trajectory kind: {spec.kind!r}")


def _headings(positions: np.ndarray) -> np.ndarray:
    """Yaw angles following the motion direction (held while stationary)."""
    n = positions.shape[0]
    yaw = np.zeros(n)
    last = 0.0
    for k in range(n):
        ref = positions[min(k + 1, n - 1)] - positions[k] if k + 1 < n else positions[k] - positions[k - 1]
        if np.hypot(ref[0], ref[1]) > 1e-12:
            last = math.atan2(ref[1], ref[0])
        yaw[k] = last
    return yaw


def generate_ground_truth(config: ScenarioConfig) -> list:
    """Ground-truth trajectories for every robot, with separation checks."""
    n_steps = config.n_steps
    trajectories = []
    all_positions = []
    for robot in config.robots:
        pos = _positions_for(robot.trajectory, n_steps, config.dt)
        yaw = _headings(pos)
        rotations = np.stack([rot_z(a) for a in yaw])
        trajectories.append(Trajectory(np.arange(n_steps + 1), rotations, pos, config.dt))
        all_positions.append(pos)
    stack = np.stack(all_positions)  # (n_robots, steps, 3)
    for i in range(len(stack)):
        for j in range(i + 1, len(stack)):
            dmin = float(np.linalg.norm(stack[i] - stack[j], axis=1).min())
            if dmin < MIN_SEPARATION:
                raise ValueError(
                    f"robots {i} and {j} come within {dmin:.3f} m (< {MIN_SEPARATION} m)"
                )
    return trajectories


def simulate_vio(gt: Trajectory, params: VioParams, seed, robot: int = 0):
    """Corrupt a ground-truth trajectory into a local-frame VIO estimate.

    Returns (vio trajectory starting at the identity, list of OdomSample
    carrying the true body-frame velocity, |yaw|/|pitch| rates, and the
    feature depth for each step).
    """
    rng = np.random.default_rng(seed)
    dt = gt.dt
    scale = np.asarray(params.scale, dtype=float)
    n = len(gt)

    poses = [RigidPose.identity()]
    samples = [
        OdomSample(robot, int(gt.steps[0]), poses[0], np.zeros(3), 0.0, 0.0,
                   params.feature_depth)
    ]
    current = poses[0]
    for k in range(1, n):
        R_prev, R_cur = gt.rotations[k - 1], gt.rotations[k]
        dR = R_prev.T @ R_cur
        dp = R_prev.T @ (gt.translations[k] - gt.translations[k - 1])

        noisy_dp = scale * dp
        norm = float(np.linalg.norm(dp))
        if norm > 1e-12 and params.drift_rate != 0.0:
            noisy_dp = noisy_dp + params.drift_rate * norm * (dp / norm)
        noisy_dp = noisy_dp + rng.normal(0.0, params.sigma_pos, 3)
        rot_noise = rng.normal(0.0, params.sigma_rot * math.sqrt(dt), 3)
        noisy_dR = dR @ so3_exp(rot_noise)

        current = compose(current, RigidPose(noisy_dR, noisy_dp))
        if k % 512 == 0:
            current = current.renormalized()
        poses.append(current)

        rates = so3_log(dR) / dt
        samples.append(
            OdomSample(
                robot=robot,
                step=int(gt.steps[k]),
                pose=current,
                velocity=dp / dt,
                yaw_rate=abs(float(rates[2])),
                pitch_rate=abs(float(rates[1])),
                feature_depth=params.feature_depth,
            )
        )
    return Trajectory.from_poses(gt.steps, poses, dt), samples


class UwbStream(NamedTuple):
    """Per-step raw range samples plus which of them carry NLOS bias."""

    by_step: list  # by_step[t] -> list[RawRange]
    nlos_by_step: list  # aligned boolean arrays


def simulate_uwb(gt_list, params: UwbParams, seed) -> UwbStream:
    """Noisy pairwise ranges, `samples_per_step` per pair and step.

    Sub-step samples measure linearly interpolated ground-truth positions,
    so the stream behaves like a faster sensor on the same clock.
    """
    rng = np.random.default_rng(seed)
    n_robots = len(gt_list)
    n = len(gt_list[0])
    positions = np.stack([traj.translations for traj in gt_list])  # (robots, steps, 3)
    k = params.samples_per_step
    lo, hi = params.nlos_bias

    by_step = []
    nlos_by_step = []
    for t in range(n):
        step_samples = []
        step_nlos = []
        for sub in range(k):
            if t == 0:
                pos = positions[:, 0, :]
            else:
                frac = (sub + 1) / k
                pos = positions[:, t - 1, :] + frac * (positions[:, t, :] - positions[:, t - 1, :])
            for i in range(n_robots):
                for j in range(i + 1, n_robots):
                    true = float(np.linalg.norm(pos[i] - pos[j]))
                    value = true + rng.normal(0.0, params.sigma)
                    is_nlos = bool(rng.random() < params.p_nlos)
                    if is_nlos:
                        value += rng.uniform(lo, hi)
                    step_samples.append(RawRange(i, j, t, max(value, 0.0)))
                    step_nlos.append(is_nlos)
        by_step.append(step_samples)
        nlos_by_step.append(np.asarray(step_nlos, dtype=bool))
    return UwbStream(by_step, nlos_by_step)
