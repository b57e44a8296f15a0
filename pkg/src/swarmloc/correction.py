"""Anchor-based trajectory correction.

At each anchor epoch the endpoint discrepancy between the estimated pose
and its anchor node is distributed linearly over the epoch's nodes, a
per-axis multiplicative scale error is estimated from the anchor/estimate
displacements, and the accumulated scale error is fed back into the VIO
translation increments of the following epoch.
"""

from dataclasses import dataclass

import numpy as np

# Axes whose estimated displacement is below this (meters) give scale
# factor 1: the quotient is numerically meaningless without motion.
EPS_MOTION = 0.05
SCALE_MIN = 0.5
SCALE_MAX = 2.0


@dataclass(frozen=True)
class ScaleState:
    """Accumulated per-axis scale error e_S for one robot."""

    factors: np.ndarray  # (3,)
    epoch: int = 0

    def __post_init__(self):
        f = np.array(self.factors, dtype=float)
        if f.shape != (3,) or not np.all(np.isfinite(f)):
            raise ValueError("scale factors must be a finite 3-vector")
        if np.any(f < SCALE_MIN - 1e-12) or np.any(f > SCALE_MAX + 1e-12):
            raise ValueError("scale factors outside the clamp range")
        f.setflags(write=False)
        object.__setattr__(self, "factors", f)

    @staticmethod
    def initial() -> "ScaleState":
        return ScaleState(np.ones(3), epoch=0)


@dataclass(frozen=True)
class CorrectionBatch:
    """Result of correcting one robot's nodes over one anchor epoch."""

    robot: int
    epoch: int
    before: np.ndarray  # (m+1, 3) nodes, before[0] is the previous anchor
    after: np.ndarray  # (m+1, 3) corrected nodes
    discrepancy: np.ndarray  # e_D = anchor - before[-1]

    def __post_init__(self):
        for name in ("before", "after", "discrepancy"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def scale_error(prev_anchor, cur_anchor, prev_est, cur_est,
                eps_motion=EPS_MOTION, s_min=SCALE_MIN, s_max=SCALE_MAX) -> np.ndarray:
    """Per-axis |anchor displacement| / |estimate displacement|.

    Axes where the estimate moved less than eps_motion return factor 1;
    everything is clamped to [s_min, s_max].
    """
    da = np.abs(np.asarray(cur_anchor, dtype=float) - np.asarray(prev_anchor, dtype=float))
    de = np.abs(np.asarray(cur_est, dtype=float) - np.asarray(prev_est, dtype=float))
    factors = np.ones(3)
    moving = de >= eps_motion
    factors[moving] = np.clip(da[moving] / de[moving], s_min, s_max)
    return factors


def update_scale_state(state: ScaleState, factors, s_min=SCALE_MIN,
                       s_max=SCALE_MAX, epoch=None) -> ScaleState:
    """Accumulate epoch factors into the state (Hadamard product, clamped)."""
    f = np.clip(state.factors * np.asarray(factors, dtype=float), s_min, s_max)
    return ScaleState(f, epoch=state.epoch + 1 if epoch is None else epoch)


def correct_epoch(nodes, anchor, robot: int = 0, epoch: int = 0) -> CorrectionBatch:
    """Distribute the endpoint discrepancy linearly over the epoch's nodes.

    nodes: (m+1, 3) positions from the previous anchor (index 0, already
    corrected) through the current estimate (index m). corrected[n] =
    nodes[n] + (n / m) * e_D, so index 0 is untouched and index m lands on
    the anchor exactly.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 2 or nodes.shape[1] != 3 or nodes.shape[0] < 2:
        raise ValueError("empty epoch")
    anchor = np.asarray(anchor, dtype=float)
    m = nodes.shape[0] - 1
    e_d = anchor - nodes[-1]
    fractions = np.arange(m + 1) / m
    after = nodes + fractions[:, None] * e_d[None, :]
    after[0] = nodes[0]
    after[-1] = anchor
    return CorrectionBatch(robot=robot, epoch=epoch, before=nodes, after=after, discrepancy=e_d)


def apply_scale_feedback(delta, state: ScaleState) -> np.ndarray:
    """Scale one VIO translation increment by the accumulated e_S."""
    d = np.asarray(delta, dtype=float)
    if d.shape != (3,):
        raise ValueError("increment must be a 3-vector")
    return d * state.factors
