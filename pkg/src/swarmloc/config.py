"""Scenario configuration: schema, file I/O, and presets.

Configs are plain YAML (JSON works too) with a versioned schema_version
field. Everything a run needs — trajectories, sensor noise, pipeline
parameters, and the RNG seed — lives in one document so a (config, seed)
pair reproduces a run bit for bit.
"""

from dataclasses import dataclass, field, asdict

import yaml

from .weights import CameraFov

SCHEMA_VERSION = 1

TRAJECTORY_KINDS = ("circle", "lawnmower", "lissajous", "waypoints", "stationary")


@dataclass(frozen=True)
class TrajectorySpec:
    """Parametric ground-truth path. `params` are kind-specific."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind: {self.kind!r}")


@dataclass(frozen=True)
class VioParams:
    """Per-robot VIO noise model parameters.

    scale: per-axis multiplicative error on body-frame increments
    drift_rate: m of extra drift per m traveled, along the motion direction
    sigma_pos: white noise std per step on the translation increment (m)
    sigma_rot: rotation random-walk density (rad / sqrt(s))
    feature_depth: representative scene depth l (m) for the weights
    """

    scale: tuple = (1.0, 1.0, 1.0)
    drift_rate: float = 0.0
    sigma_pos: float = 0.0
    sigma_rot: float = 0.0
    feature_depth: float = 10.0

    def __post_init__(self):
        if len(self.scale) != 3 or any(s <= 0 for s in self.scale):
            raise ValueError("scale must be three positive factors")
        if self.sigma_pos < 0 or self.sigma_rot < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.feature_depth <= 0:
            raise ValueError("feature depth must be positive")
        object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))


@dataclass(frozen=True)
class UwbParams:
    """Range sensor model: Gaussian noise plus occasional NLOS bias."""

    sigma: float = 0.1
    p_nlos: float = 0.0
    nlos_bias: tuple = (1.0, 3.0)
    samples_per_step: int = 5

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("range sigma must be non-negative")
        if not (0.0 <= self.p_nlos < 0.5):
            raise ValueError("p_nlos must lie in [0, 0.5)")
        lo, hi = self.nlos_bias
        if lo < 0 or hi < lo:
            raise ValueError("nlos_bias must be 0 <= lo <= hi")
        if self.samples_per_step < 1:
            raise ValueError("samples_per_step must be at least 1")
        object.__setattr__(self, "nlos_bias", (float(lo), float(hi)))


@dataclass(frozen=True)
class PipelineParams:
    """Tuning knobs of the estimation pipeline (defaults follow the docs)."""

    zeta: float | None = None  # None -> 0.1 * n * (n - 1)
    epsilon: float = 1e-6
    eps_motion: float = 0.05
    scale_deadband: float = 0.0  # |log factor| below this skips the update
    gauge_gain: float = 1.0  # fitted-gauge fraction kept per epoch; <1 transports
    scale_min: float = 0.5
    scale_max: float = 2.0
    ma_window: int = 5
    ransac_window: int = 15
    ransac_threshold: float = 0.3
    ransac_min_samples: int = 5
    ransac_iterations: int = 50
    lambda_range: float = 1.0
    lambda_vio: float = 1.0
    min_anchor_spacing: float = 1.0  # seconds between anchor epochs
    scale_feedback_frame: str = "world"  # or "local"
    max_gn_iterations: int = 20
    startup_window: float = 5.0  # unknown-initial deadline, seconds

    def __post_init__(self):
        if self.scale_feedback_frame not in ("world", "local"):
            raise ValueError("scale_feedback_frame must be 'world' or 'local'")
        if self.min_anchor_spacing < 0:
            raise ValueError("min_anchor_spacing must be non-negative")
        if not (0.0 <= self.gauge_gain <= 1.0):
            raise ValueError("gauge_gain must lie in [0, 1]")


@dataclass(frozen=True)
class RobotConfig:
    trajectory: TrajectorySpec
    vio: VioParams = field(default_factory=VioParams)


@dataclass(frozen=True)
class ScenarioConfig:
    robots: list
    seed: int = 0
    dt: float = 0.1
    duration: float = 60.0
    initial_pose_mode: str = "known"
    uwb: UwbParams = field(default_factory=UwbParams)
    camera: CameraFov = field(default_factory=lambda: CameraFov(1.5, 1.0))
    pipeline: PipelineParams = field(default_factory=PipelineParams)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version: {self.schema_version}")
        if len(self.robots) < 4:
            raise ValueError("scenarios need at least 4 robots")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if self.duration < 10 * self.dt:
            raise ValueError("duration must cover at least 10 steps")
        if self.initial_pose_mode not in ("known", "unknown"):
            raise ValueError("initial_pose_mode must be 'known' or 'unknown'")

    @property
    def n_robots(self) -> int:
        return len(self.robots)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["robots"] = [
            {
                "trajectory": {"kind": r.trajectory.kind, "params": dict(r.trajectory.params)},
                "vio": asdict(r.vio) | {"scale": list(r.vio.scale)},
            }
            for r in self.robots
        ]
        out["uwb"] = asdict(self.uwb) | {"nlos_bias": list(self.uwb.nlos_bias)}
        out["camera"] = {"theta_h": self.camera.theta_h, "theta_v": self.camera.theta_v}
        out["pipeline"] = asdict(self.pipeline)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        robots = []
        for r in data.pop("robots"):
            spec = TrajectorySpec(r["trajectory"]["kind"], dict(r["trajectory"].get("params", {})))
            vio_raw = dict(r.get("vio", {}))
            if "scale" in vio_raw:
                vio_raw["scale"] = tuple(vio_raw["scale"])
            robots.append(RobotConfig(spec, VioParams(**vio_raw)))
        uwb_raw = dict(data.pop("uwb", {}))
        if "nlos_bias" in uwb_raw:
            uwb_raw["nlos_bias"] = tuple(uwb_raw["nlos_bias"])
        cam_raw = data.pop("camera", None)
        camera = CameraFov(**cam_raw) if cam_raw else CameraFov(1.5, 1.0)
        pipe_raw = dict(data.pop("pipeline", {}))
        return cls(
            robots=robots,
            uwb=UwbParams(**uwb_raw),
            camera=camera,
            pipeline=PipelineParams(**pipe_raw),
            **data,
        )


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} does not hold a mapping")
    return ScenarioConfig.from_dict(data)


def save_config(config: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)


def override_config(data: dict, path: str, value) -> dict:
    """Set a dotted-path key (e.g. 'uwb.sigma') in a config dict copy."""
    out = dict(data)
    keys = path.split(".")
    node = out
    for key in keys[:-1]:
        node[key] = dict(node.get(key, {}))
        node = node[key]
    node[keys[-1]] = value
    return out


# Team layout for the presets: parallel lawnmower sweeps from offsets
# spread in all three axes — a near-collinear or near-planar team makes
# the range-only structure ill-conditioned and the mirror test ambiguous.
# The formation deliberately does not rotate. A rigid formation's ranges
# say nothing about the world frame, so an unknown-start world boots with
# an arbitrary constellation rotation; with translation-only motion that
# rotation never enters any robot's own path shape (initial-pose-aligned
# ATE is blind to it), whereas rotating members would sweep arcs that
# expose it. One robot's scale error stays observable without rotation:
# the healthy consensus pins the sweep and the faulty chain overshoots
# it. Only a scale error shared by the whole team is invisible here —
# pure relative ranging has no absolute yardstick for common mode.
_FORMATION_OFFSETS = (
    (0.0, 0.0, 1.0),
    (5.0, 2.0, 4.5),
    (-3.0, 6.5, 2.0),
    (2.5, 8.5, 6.0),
    (-5.0, 3.5, 7.0),
    (6.0, 7.0, 1.5),
    (-1.5, 11.0, 4.0),
    (4.0, 12.5, 8.0),
)

# Both presets anchor every few seconds: longer epochs give the scale
# quotient a larger displacement baseline (less noise per epoch and fewer
# multiplicative updates overall), and the raised motion threshold keeps
# noise-only axes out of the quotient entirely. The deadband sits just
# above the quotient's noise floor (~1.5% at this baseline and ranging
# noise), so healthy scale states hold exactly 1 and only a persistent
# reading moves them. zeta suits the residual level of sigma = 0.1 m
# ranging after filtering. The range term in the per-step optimizer is
# kept weak on purpose: each robot's estimate must follow its own
# corrected odometry between anchors or per-robot scale errors would be
# masked by the team consensus; the anchors, not the per-step ranges,
# supply the drift-free rigidity. epsilon sits at the filtered-range
# residual scale: far below it the consistency weight turns into a
# winner-takes-all lottery among robots whose estimates all agree with
# the structure to within noise, and the alignment then tracks the
# formation's rotation from too few points. The gauge gain keeps only a
# sliver of each epoch's fitted rotation/translation, since the fitted
# gauge re-measures the dead reckoning's own gauge plus alignment noise.
_PRESET_PIPELINE = PipelineParams(zeta=8.0, min_anchor_spacing=4.0,
                                  eps_motion=0.5, scale_deadband=0.05,
                                  gauge_gain=0.15, lambda_range=1e-2,
                                  epsilon=0.05)


def _formation_lawnmower(index, leg_length, spacing, legs, speed, n_robots):
    origin = _FORMATION_OFFSETS[index]
    return TrajectorySpec(
        "lawnmower",
        {
            "origin": list(origin),
            "leg_length": leg_length,
            "spacing": spacing,
            "legs": legs,
            "speed": speed,
        },
    )


def default_scenario(seed=7, duration=60.0, n_robots=5) -> ScenarioConfig:
    """A benign team: parallel lawnmower sweeps, mild VIO noise.

    Speed and duration give each robot a ~76 m path.
    """
    robots = [
        RobotConfig(
            _formation_lawnmower(i, leg_length=40.0, spacing=3.0, legs=3,
                                 speed=1.25, n_robots=n_robots),
            VioParams(sigma_pos=0.01, sigma_rot=0.003),
        )
        for i in range(n_robots)
    ]
    return ScenarioConfig(robots=robots, seed=seed, duration=duration,
                          pipeline=_PRESET_PIPELINE)


def scale_fault_scenario(seed=7, duration=200.0, initial_pose_mode="known") -> ScenarioConfig:
    """Five robots, ~240 m each; robot 4 (1-based) has a severe per-axis
    scale error of 1.3 plus 0.02 m/m drift on its VIO."""
    robots = []
    for i in range(5):
        faulty = i == 3
        vio = VioParams(
            scale=(1.3, 1.3, 1.3) if faulty else (1.0, 1.0, 1.0),
            drift_rate=0.02 if faulty else 0.0,
            sigma_pos=0.01,
            sigma_rot=0.003,
        )
        robots.append(
            RobotConfig(_formation_lawnmower(i, 40.0, 3.0, 10, 1.17, n_robots=5), vio)
        )
    return ScenarioConfig(
        robots=robots,
        seed=seed,
        duration=duration,
        initial_pose_mode=initial_pose_mode,
        uwb=UwbParams(sigma=0.1, p_nlos=0.05, nlos_bias=(1.0, 3.0), samples_per_step=5),
        pipeline=_PRESET_PIPELINE,
    )
