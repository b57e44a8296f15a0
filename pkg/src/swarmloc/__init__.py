"""Range-aided cooperative localization for small robot teams.

Fuses per-robot visual-inertial odometry (drifting, possibly with scale
error) with inter-robot UWB distance measurements: filtered ranges give a
relative structure of the team, accepted structures are aligned into the
world as anchor nodes, and the anchors both correct the trajectories and
feed scale/drift corrections back into dead reckoning, while a per-step
optimizer keeps all world poses consistent with the latest ranges.
"""

from .alignment import AnchorNodeSet, alignment_cost, select_mirror, weighted_align
from .config import (PipelineParams, RobotConfig, ScenarioConfig,
                     TrajectorySpec, UwbParams, VioParams, default_scenario,
                     load_config, override_config, save_config,
                     scale_fault_scenario)
from .correction import (CorrectionBatch, ScaleState, apply_scale_feedback,
                         correct_epoch, scale_error, update_scale_state)
from .evaluate import (AteReport, RobotMetrics, align_full, align_initial,
                       ate_rmse, build_report, evaluate_run, format_table,
                       trajectory_length, write_metrics)
from .geometry import (RigidPose, Timestamp, Trajectory, compose, inverse,
                       quaternion_to_rotation, rotation_to_quaternion, so3_exp,
                       so3_log)
from .global_pose import WorldState, global_cost, initialize_world, optimize_step
from .pipeline import (SimulatedRun, read_ranges_csv, run_pipeline, run_replay,
                       write_ranges_csv, write_run)
from .ranging import (RangeFilterBank, RangeSet, RawRange, assemble_range_set,
                      moving_average, ransac_filter)
from .simulate import UwbStream, generate_ground_truth, simulate_uwb, simulate_vio
from .structure import (StructureEstimate, accept_structure, default_zeta,
                        estimate_structure, gauge_normalize, mds_embedding,
                        pairwise_distances, structure_residual)
from .weights import (CameraFov, OdomSample, WeightSet, consistency_weight,
                      epoch_length, normalize_and_total, rotation_weight,
                      velocity_weight)

__version__ = "0.1.0"

__all__ = [
    "AnchorNodeSet", "alignment_cost", "select_mirror", "weighted_align",
    "PipelineParams", "RobotConfig", "ScenarioConfig", "TrajectorySpec",
    "UwbParams", "VioParams", "default_scenario", "load_config",
    "override_config", "save_config", "scale_fault_scenario",
    "CorrectionBatch", "ScaleState", "apply_scale_feedback", "correct_epoch",
    "scale_error", "update_scale_state",
    "AteReport", "RobotMetrics", "align_full", "align_initial", "ate_rmse",
    "build_report", "evaluate_run", "format_table", "trajectory_length",
    "write_metrics",
    "RigidPose", "Timestamp", "Trajectory", "compose", "inverse",
    "quaternion_to_rotation", "rotation_to_quaternion", "so3_exp", "so3_log",
    "WorldState", "global_cost", "initialize_world", "optimize_step",
    "SimulatedRun", "read_ranges_csv", "run_pipeline", "run_replay",
    "write_ranges_csv", "write_run",
    "RangeFilterBank", "RangeSet", "RawRange", "assemble_range_set",
    "moving_average", "ransac_filter",
    "UwbStream", "generate_ground_truth", "simulate_uwb", "simulate_vio",
    "StructureEstimate", "accept_structure", "default_zeta",
    "estimate_structure", "gauge_normalize", "mds_embedding",
    "pairwise_distances", "structure_residual",
    "CameraFov", "OdomSample", "WeightSet", "consistency_weight",
    "epoch_length", "normalize_and_total", "rotation_weight",
    "velocity_weight",
]
