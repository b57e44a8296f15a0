"""Weighted rigid registration of the range-only structure into the world
frame, with explicit mirror disambiguation.

The closed-form weighted Kabsch/SVD solution minimizes the squared-norm
objective sum_i w_i ||world_i - T(structure_i)||^2 (with a reflection
guard so T is always a proper rotation); candidate selection between the
structure and its mirror twin compares the unsquared weighted cost
sum_i w_i ||world_i - T(structure_i)||, which is the quantity the anchor
placement actually cares about.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import RigidPose
from .structure import StructureEstimate


@dataclass(frozen=True)
class AnchorNodeSet:
    """World-frame anchor nodes produced at one anchor epoch."""

    epoch: int
    step: int
    transform: RigidPose
    anchors: np.ndarray  # (n, 3) world positions
    mirrored: bool
    cost: float  # unsquared weighted cost of the chosen candidate
    cost_rejected: float  # same cost for the other candidate

    def __post_init__(self):
        a = np.array(self.anchors, dtype=float)
        if a.ndim != 2 or a.shape[1] != 3:
            raise ValueError("anchors must be an (n, 3) array")
        a.setflags(write=False)
        object.__setattr__(self, "anchors", a)

    @property
    def n(self) -> int:
        return self.anchors.shape[0]


def alignment_cost(world, structure, weights, pose: RigidPose) -> float:
    """Unsquared weighted cost sum_i w_i ||world_i - pose(structure_i)||."""
    world = np.asarray(world, dtype=float)
    structure = np.asarray(structure, dtype=float)
    w = np.asarray(weights, dtype=float)
    residual = np.linalg.norm(world - pose.apply(structure), axis=1)
    return float((w * residual).sum())


def weighted_align(world, structure, weights):
    """Best-fit rigid transform from structure to world under weights.

    Returns (RigidPose, unsquared weighted cost). The transform is the
    closed-form weighted least-squares (squared-norm) minimizer.

    Raises ValueError for fewer than 3 points, non-positive total weight,
    or degenerate (collinear) point sets.
    """
    world = np.asarray(world, dtype=float)
    structure = np.asarray(structure, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = world.shape[0]
    if world.shape != structure.shape or world.shape != (n, 3):
        raise ValueError("world and structure must both be (n, 3)")
    if w.shape != (n,):
        raise ValueError("weights must be one scalar per robot")
    if np.any(w < 0.0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if not total > 0.0:
        raise ValueError("zero total weight")
    if n < 3:
        raise ValueError("alignment needs at least 3 points")

    wn = w / total
    mu_world = wn @ world
    mu_struct = wn @ structure
    wc = world - mu_world
    sc = structure - mu_struct
    H = (sc * wn[:, None]).T @ wc
    U, svals, Vt = np.linalg.svd(H)
    if svals[1] <= 1e-9 * max(svals[0], 1.0):
        raise ValueError("alignment degenerate")
    D = np.diag([1.0, 1.0, float(np.sign(np.linalg.det(Vt.T @ U.T)))])
    R = Vt.T @ D @ U.T
    t = mu_world - R @ mu_struct
    pose = RigidPose(R, t)
    return pose, alignment_cost(world, structure, w, pose)


def select_mirror(estimate: StructureEstimate, world, weights, epoch: int = 0) -> AnchorNodeSet:
    """Align both reflection twins and keep the cheaper one.

    Ties (e.g. planar formations, where the twins coincide) break to the
    un-mirrored candidate. The anchors are the chosen candidate's
    positions mapped through the fitted transform.
    """
    pose_plain, cost_plain = weighted_align(world, estimate.positions, weights)
    pose_mirror, cost_mirror = weighted_align(world, estimate.mirror_positions, weights)
    mirrored = bool(cost_mirror < cost_plain)
    if mirrored:
        pose, cost, other = pose_mirror, cost_mirror, cost_plain
        anchors = pose_mirror.apply(estimate.mirror_positions)
    else:
        pose, cost, other = pose_plain, cost_plain, cost_mirror
        anchors = pose_plain.apply(estimate.positions)
    return AnchorNodeSet(
        epoch=epoch,
        step=estimate.step,
        transform=pose,
        anchors=anchors,
        mirrored=mirrored,
        cost=cost,
        cost_rejected=other,
    )
