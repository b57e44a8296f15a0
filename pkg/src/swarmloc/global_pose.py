"""Per-step global pose optimization.

Each step solves, over the world poses of all robots jointly,

    sum_i ( lambda_r * sum_{j != i} | r_ij^2 - ||x_i - x_j||^2 |
          + lambda_v * || inv(T0_i) T_i - L_i ||_F^2 )

where L_i is robot i's (scale-corrected) local VIO pose and the Frobenius
norm acts on the 3x4 [R | t] block. The world frame is robot 0's local
frame, so robot 0's initial pose is pinned to the identity. The absolute-
value range term is handled by iteratively reweighted least squares inside
a damped Gauss-Newton loop over a local parameterization (3 rotation + 3
translation parameters per robot); steps are only accepted when the true
cost decreases, so the result never ranks worse than its warm start.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidPose, Trajectory, compose, inverse, so3_exp, so3_hat
from .ranging import RangeSet
from .structure import StructureEstimate

_E_HAT = np.stack([so3_hat(e) for e in np.eye(3)])  # generators of so(3)


def global_cost(poses, ranges, vio_poses, initials, lambda_range=1.0, lambda_vio=1.0) -> float:
    """Evaluate the per-step objective at the given world poses.

    ranges may be None or carry invalid pairs; those terms are skipped.
    Ordered pairs are both counted, matching the double sum.
    """
    n = len(poses)
    positions = np.stack([p.translation for p in poses])
    cost = 0.0
    if ranges is not None:
        d2 = ((positions[:, None, :] - positions[None, :, :]) ** 2).sum(axis=2)
        r2 = ranges.distances**2
        off = ranges.valid & ~np.eye(n, dtype=bool)
        cost += lambda_range * float(np.abs(r2 - d2)[off].sum())
    for i in range(n):
        rel = compose(inverse(initials[i]), poses[i])
        diff = rel.matrix3x4() - vio_poses[i].matrix3x4()
        cost += lambda_vio * float((diff**2).sum())
    return cost


def optimize_step(warm, ranges, vio_poses, initials, *, lambda_range=1.0,
                  lambda_vio=1.0, max_iterations=20, step_tol=1e-10,
                  irls_delta=1e-6) -> list:
    """Damped Gauss-Newton refinement of all robots' world poses.

    Args:
        warm: list of RigidPose warm starts (previous estimate propagated
            by the VIO increment).
        ranges: RangeSet for this step (invalid pairs are skipped) or None.
        vio_poses: per-robot local VIO poses entering the odometry term.
        initials: per-robot initial world poses (robot 0 = identity).

    Returns the refined poses; the true cost never exceeds the warm-start
    cost. Raises RuntimeError("optimizer diverged") on non-finite costs.
    """
    n = len(warm)
    rotations = [p.rotation.copy() for p in warm]
    positions = np.stack([p.translation for p in warm])
    R0 = [initials[i].rotation for i in range(n)]
    t0 = np.stack([initials[i].translation for i in range(n)])
    RL = [vio_poses[i].rotation for i in range(n)]
    tL = np.stack([vio_poses[i].translation for i in range(n)])

    if ranges is not None:
        iu, ju = np.triu_indices(n, k=1)
        keep = ranges.valid[iu, ju]
        iu, ju = iu[keep], ju[keep]
        r2 = ranges.distances[iu, ju] ** 2
    else:
        iu = ju = np.zeros(0, dtype=int)
        r2 = np.zeros(0)

    def true_cost(rots, pos):
        cost = 0.0
        if len(iu):
            d2 = ((pos[iu] - pos[ju]) ** 2).sum(axis=1)
            cost += 2.0 * lambda_range * float(np.abs(r2 - d2).sum())
        for i in range(n):
            dR = R0[i].T @ rots[i] - RL[i]
            dt = R0[i].T @ (pos[i] - t0[i]) - tL[i]
            cost += lambda_vio * (float((dR**2).sum()) + float(dt @ dt))
        return cost

    current = true_cost(rotations, positions)
    if not np.isfinite(current):
        raise RuntimeError("optimizer diverged")
    mu = 1e-6
    for _ in range(max_iterations):
        dim = 6 * n
        H = np.zeros((dim, dim))
        g = np.zeros(dim)

        # range terms touch translations only
        if len(iu):
            diff = positions[iu] - positions[ju]
            f = r2 - (diff**2).sum(axis=1)
            w = 2.0 * lambda_range / (np.abs(f) + irls_delta)
            for k in range(len(iu)):
                a, b = iu[k], ju[k]
                Ja = -2.0 * diff[k]
                sa, sb = 6 * a + 3, 6 * b + 3
                wk = w[k]
                H[sa : sa + 3, sa : sa + 3] += wk * np.outer(Ja, Ja)
                H[sb : sb + 3, sb : sb + 3] += wk * np.outer(Ja, Ja)
                H[sa : sa + 3, sb : sb + 3] -= wk * np.outer(Ja, Ja)
                H[sb : sb + 3, sa : sa + 3] -= wk * np.outer(Ja, Ja)
                g[sa : sa + 3] += wk * f[k] * Ja
                g[sb : sb + 3] -= wk * f[k] * Ja

        # odometry terms: rotation block (9 residuals) + translation block (3)
        for i in range(n):
            A = R0[i].T @ rotations[i]
            res_R = (A - RL[i]).reshape(9)
            JR = np.einsum("ab,kbc->ack", A, _E_HAT).reshape(9, 3)
            s = 6 * i
            H[s : s + 3, s : s + 3] += lambda_vio * (JR.T @ JR)
            g[s : s + 3] += lambda_vio * (JR.T @ res_R)
            res_t = R0[i].T @ (positions[i] - t0[i]) - tL[i]
            # J_t = R0^T, so J^T J = I and J^T res = R0 @ res
            H[s + 3 : s + 6, s + 3 : s + 6] += lambda_vio * np.eye(3)
            g[s + 3 : s + 6] += lambda_vio * (R0[i] @ res_t)

        accepted = False
        step_norm = 0.0
        for _ in range(12):
            try:
                delta = np.linalg.solve(H + mu * np.eye(dim), -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            cand_R = [rotations[i] @ so3_exp(delta[6 * i : 6 * i + 3]) for i in range(n)]
            cand_p = positions + delta.reshape(n, 6)[:, 3:]
            cand_cost = true_cost(cand_R, cand_p)
            if not np.isfinite(cand_cost):
                raise RuntimeError("optimizer diverged")
            if cand_cost < current:
                rotations, positions, current = cand_R, cand_p, cand_cost
                step_norm = float(np.linalg.norm(delta))
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                break
            mu *= 10.0
            if mu > 1e12:
                break
        if not accepted or step_norm < step_tol:
            break

    return [RigidPose(rotations[i], positions[i]) for i in range(n)]


def initialize_world(mode: str, structure: StructureEstimate | None = None,
                     gt_initials=None, vio_at_structure=None) -> list:
    """Initial world poses for all robots.

    known mode: initial poses are the ground-truth poses expressed
    relative to robot 0, so robot 0's initial pose is the identity.
    unknown mode: the first accepted structure fixes where each robot sits
    *now*; `vio_at_structure` (each robot's dead-reckoned pose at that
    moment) is inverted out so that `initials[i] . vio_i(s)` reproduces the
    structure at acceptance time. The result is re-gauged so robot 0's
    initial pose is exactly the identity. When `vio_at_structure` is
    omitted the chains are taken as identity (acceptance at step 0).
    """
    if mode == "known":
        if not gt_initials:
            raise ValueError("known-initial mode needs ground-truth initial poses")
        base = inverse(gt_initials[0])
        initials = [compose(base, p).renormalized() for p in gt_initials]
        initials[0] = RigidPose.identity()
        return initials
    if mode == "unknown":
        if structure is None:
            raise ValueError("unknown-initial mode needs an accepted structure")
        if vio_at_structure is None:
            vio_at_structure = [RigidPose.identity() for _ in structure.positions]
        offsets = [
            compose(RigidPose(vio_at_structure[i].rotation, pos),
                    inverse(vio_at_structure[i]))
            for i, pos in enumerate(structure.positions)
        ]
        base = inverse(offsets[0])
        initials = [compose(base, off).renormalized() for off in offsets]
        initials[0] = RigidPose.identity()
        return initials
    raise ValueError(f"unknown initialization mode: {mode!r}")


@dataclass
class WorldState:
    """Mutable world-frame record for a run.

    Holds each robot's initial pose, current pose, and full corrected
    trajectory (positions are rewritten in place by anchor corrections;
    rotations are never corrected). The world frame is robot 0's local
    frame, so initials[0] must be the identity.
    """

    initials: list
    current: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    _rotations: list = field(default_factory=list)
    _positions: list = field(default_factory=list)

    def __post_init__(self):
        ident = self.initials[0]
        if (np.abs(ident.rotation - np.eye(3)).max() > 1e-12
                or np.abs(ident.translation).max() > 1e-12):
            raise ValueError("world frame must be anchored to robot 0 (identity initial)")
        self.current = list(self.initials)
        self._rotations = [[] for _ in self.initials]
        self._positions = [[] for _ in self.initials]

    @property
    def n(self) -> int:
        return len(self.initials)

    def append_step(self, step: int, poses) -> None:
        self.steps.append(step)
        self.current = list(poses)
        for i, p in enumerate(poses):
            self._rotations[i].append(p.rotation)
            self._positions[i].append(p.translation.copy())

    def positions_at(self, index: int) -> np.ndarray:
        """(n, 3) corrected positions at a step index (not step number)."""
        return np.stack([self._positions[i][index] for i in range(self.n)])

    def position_history(self, robot: int, start: int, stop: int) -> np.ndarray:
        """(stop-start+1, 3) positions for step indices start..stop inclusive."""
        return np.stack(self._positions[robot][start : stop + 1])

    def overwrite_positions(self, robot: int, start: int, corrected) -> None:
        for offset, value in enumerate(corrected):
            self._positions[robot][start + offset] = np.asarray(value, dtype=float)

    def set_current_position(self, robot: int, position) -> None:
        pose = RigidPose(self.current[robot].rotation, position)
        self.current[robot] = pose
        self._positions[robot][-1] = pose.translation.copy()

    def trajectory(self, robot: int, dt: float) -> Trajectory:
        return Trajectory(
            np.asarray(self.steps),
            np.stack(self._rotations[robot]),
            np.stack(self._positions[robot]),
            dt,
        )
