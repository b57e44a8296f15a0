"""Trajectory evaluation: alignment, ATE, and the metrics report.

The headline numbers use initial-pose alignment only — each estimate is
moved so its first pose coincides with ground truth, and every later
deviation counts as error. A full rigid alignment (`align="full"`) is
available as a diagnostic; it hides slowly accumulated drift and is never
written to metrics.json.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .geometry import RigidPose, Trajectory, compose, inverse

SCHEMA_VERSION = 1


def align_initial(reference: Trajectory, estimate: Trajectory) -> Trajectory:
    """Map the estimate so its first pose matches the reference's first pose."""
    transform = compose(reference.pose(0), inverse(estimate.pose(0)))
    return estimate.transformed(transform)


def align_full(reference: Trajectory, estimate: Trajectory) -> Trajectory:
    """Best rigid alignment of all positions (unit weights); diagnostic only."""
    p = estimate.positions
    q = reference.positions
    pc = p - p.mean(axis=0)
    qc = q - q.mean(axis=0)
    u, _, vt = np.linalg.svd(pc.T @ qc)
    d = np.sign(np.linalg.det(u @ vt))
    rotation = (u @ np.diag([1.0, 1.0, d]) @ vt).T
    translation = q.mean(axis=0) - rotation @ p.mean(axis=0)
    return estimate.transformed(RigidPose(rotation, translation))


def ate_rmse(reference: Trajectory, estimate: Trajectory) -> float:
    """Root-mean-square translation error over matching steps."""
    if len(reference.steps) != len(estimate.steps) or not np.array_equal(
        reference.steps, estimate.steps
    ):
        raise ValueError("trajectories must share the same step grid")
    err = reference.positions - estimate.positions
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def trajectory_length(traj: Trajectory) -> float:
    """Total path length of the position sequence."""
    deltas = np.diff(traj.positions, axis=0)
    return float(np.sum(np.linalg.norm(deltas, axis=1)))


@dataclass(frozen=True)
class RobotMetrics:
    id: int
    length_m: float
    ate_vio: float
    ate_corrected: float
    ate_global: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "length_m": self.length_m,
            "ate_vio": self.ate_vio,
            "ate_corrected": self.ate_corrected,
            "ate_global": self.ate_global,
        }


@dataclass(frozen=True)
class AteReport:
    schema_version: int
    seed: int
    per_robot: tuple

    @property
    def avg(self) -> dict:
        rows = self.per_robot
        return {
            "length_m": float(np.mean([r.length_m for r in rows])),
            "ate_vio": float(np.mean([r.ate_vio for r in rows])),
            "ate_corrected": float(np.mean([r.ate_corrected for r in rows])),
            "ate_global": float(np.mean([r.ate_global for r in rows])),
        }

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "per_robot": [r.to_dict() for r in self.per_robot],
            "avg": self.avg,
        }


def build_report(ground_truth, vio, corrected, global_, seed: int,
                 align: str = "initial") -> AteReport:
    """Compute per-robot and average ATE for the three estimate families."""
    if align == "initial":
        aligner = align_initial
    elif align == "full":
        aligner = align_full
    else:
        raise ValueError(f"unknown alignment mode: {align!r}")
    rows = []
    for i, gt in enumerate(ground_truth):
        rows.append(
            RobotMetrics(
                id=i + 1,
                length_m=trajectory_length(gt),
                ate_vio=ate_rmse(gt, aligner(gt, vio[i])),
                ate_corrected=ate_rmse(gt, aligner(gt, corrected[i])),
                ate_global=ate_rmse(gt, aligner(gt, global_[i])),
            )
        )
    return AteReport(schema_version=SCHEMA_VERSION, seed=seed, per_robot=tuple(rows))


def _emit(value, indent: int, pad: str) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            raise ValueError("metrics values must be finite")
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    inner = pad * (indent + 1)
    if isinstance(value, dict):
        items = [
            f'{inner}{json.dumps(k)}: {_emit(v, indent + 1, pad)}'
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad * indent + "}"
    if isinstance(value, (list, tuple)):
        items = [f"{inner}{_emit(v, indent + 1, pad)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + pad * indent + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_metrics(report: AteReport) -> str:
    """Deterministic JSON text: floats carry 17 significant digits, so equal
    reports serialize to identical bytes."""
    return _emit(report.to_dict(), 0, "  ") + "\n"


def write_metrics(report: AteReport, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_metrics(report))


def format_table(report: AteReport) -> str:
    """Human-readable summary table."""
    header = f"{'robot':>6} {'length_m':>10} {'ate_vio':>10} {'ate_corr':>10} {'ate_glob':>10}"
    lines = [header]
    for r in report.per_robot:
        lines.append(
            f"{r.id:>6d} {r.length_m:>10.3f} {r.ate_vio:>10.3f} "
            f"{r.ate_corrected:>10.3f} {r.ate_global:>10.3f}"
        )
    a = report.avg
    lines.append(
        f"{'avg':>6} {a['length_m']:>10.3f} {a['ate_vio']:>10.3f} "
        f"{a['ate_corrected']:>10.3f} {a['ate_global']:>10.3f}"
    )
    return "\n".join(lines)


def evaluate_run(run_dir, align: str = "initial") -> AteReport:
    """Recompute the metrics report from a run directory written earlier."""
    run = Path(run_dir)
    with open(run / "config.yaml") as fh:
        cfg = yaml.safe_load(fh)
    seed = int(cfg.get("seed", 0))
    dt = float(cfg.get("dt", 0.1))
    ids = sorted(int(p.stem.split("_")[1]) for p in run.glob("gt_*.csv"))
    if not ids:
        raise ValueError(f"no gt_*.csv trajectories in {run}")
    gt, vio, corrected, global_ = [], [], [], []
    for rid in ids:
        gt.append(Trajectory.read_csv(run / f"gt_{rid}.csv", dt=dt))
        vio.append(Trajectory.read_csv(run / f"vio_{rid}.csv", dt=dt))
        corrected.append(Trajectory.read_csv(run / f"corrected_{rid}.csv", dt=dt))
        global_.append(Trajectory.read_csv(run / f"global_{rid}.csv", dt=dt))
    return build_report(gt, vio, corrected, global_, seed=seed, align=align)
