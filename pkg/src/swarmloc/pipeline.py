"""End-to-end scenario runner.

Per step: raw UWB samples are filtered (moving average, then RANSAC), each
robot's scale-corrected VIO increment extends its local chain, and the
global optimizer refines all world poses. Whenever a fully valid range set
is available and the anchor spacing allows, a range-only structure is
estimated and gated; accepted structures trigger an anchor epoch: adaptive
weights, mirror-disambiguated alignment, linear drift correction over the
epoch's nodes, and a scale-error update that multiplies into future VIO
increments. The correction also re-registers each local chain at its
anchor, so dead reckoning always continues from the corrected position.
The layering is deliberate: between anchors the optimizer follows each
robot's own corrected odometry (the range term only conditions the
geometry weakly), which keeps per-robot drift and scale errors observable
in the epoch displacement quotients; the drift-free rigidity comes from
the range-only structure snapped in at every anchor epoch.

`run_pipeline` simulates a scenario and estimates it; `run_replay` runs
the same estimator on externally supplied range and odometry logs.
"""

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import evaluate as evaluate_mod
from .alignment import select_mirror, weighted_align
from .config import ScenarioConfig, save_config
from .correction import (ScaleState, apply_scale_feedback, correct_epoch,
                         scale_error, update_scale_state)
from .geometry import RigidPose, Trajectory, compose, inverse, so3_exp, so3_log
from .global_pose import WorldState, initialize_world, optimize_step
from .ranging import RangeFilterBank, RawRange
from .simulate import generate_ground_truth, simulate_uwb, simulate_vio
from .structure import accept_structure, default_zeta, estimate_structure
from .weights import (OdomSample, consistency_weight, normalize_and_total,
                      rotation_weight, velocity_weight)


@dataclass
class SimulatedRun:
    """Everything a run produced, for evaluation and inspection."""

    config: ScenarioConfig
    ground_truth: list | None
    vio: list  # local-frame VIO trajectories
    odometry: list  # per robot: list[OdomSample]
    range_samples: list  # raw RawRange samples per step
    range_sets: list  # filtered RangeSet per step (1..n_steps)
    world: WorldState
    global_trajectories: list  # optimizer output, before epoch corrections
    corrected_trajectories: list
    anchors: list  # AnchorNodeSet per accepted epoch
    weight_sets: list
    scale_states: list  # final per-robot ScaleState
    scale_history: list  # (n, 3) accumulated factors per epoch
    flags: dict = field(default_factory=dict)

    @property
    def n_robots(self) -> int:
        return len(self.vio)

    def vio_world_trajectory(self, robot: int) -> Trajectory:
        """Raw VIO dead reckoning placed in the world frame."""
        return self.vio[robot].transformed(self.world.initials[robot])


def run_pipeline(config: ScenarioConfig) -> SimulatedRun:
    """Simulate a scenario and run the full estimation pipeline on it."""
    n = config.n_robots
    seeds = np.random.SeedSequence(config.seed).spawn(n + 1)
    ground_truth = generate_ground_truth(config)
    vio, odometry = [], []
    for i in range(n):
        traj, samples = simulate_vio(ground_truth[i], config.robots[i].vio,
                                     seeds[i], robot=i)
        vio.append(traj)
        odometry.append(samples)
    uwb = simulate_uwb(ground_truth, config.uwb, seeds[n])
    return _estimate(config, vio, odometry, uwb.by_step, ground_truth=ground_truth)


def run_replay(config: ScenarioConfig, vio: list, range_samples: list,
               ground_truth: list | None = None) -> SimulatedRun:
    """Run the estimator on recorded VIO trajectories and raw range samples.

    `range_samples[t]` lists the RawRange measurements taken at step t;
    odometry statistics for the adaptive weights are derived from the VIO
    increments themselves.
    """
    odometry = [
        odometry_from_trajectory(traj, i, config.robots[i].vio.feature_depth)
        for i, traj in enumerate(vio)
    ]
    return _estimate(config, vio, odometry, range_samples, ground_truth=ground_truth)


def odometry_from_trajectory(traj: Trajectory, robot: int,
                             feature_depth: float) -> list:
    """Per-step odometry statistics read off a pose sequence."""
    dt = traj.dt
    samples = [OdomSample(robot, int(traj.steps[0]), traj.pose(0), np.zeros(3),
                          0.0, 0.0, feature_depth)]
    for k in range(1, len(traj)):
        inc = compose(inverse(traj.pose(k - 1)), traj.pose(k))
        rates = so3_log(inc.rotation) / dt
        samples.append(
            OdomSample(
                robot=robot,
                step=int(traj.steps[k]),
                pose=traj.pose(k),
                velocity=inc.translation / dt,
                yaw_rate=abs(float(rates[2])),
                pitch_rate=abs(float(rates[1])),
                feature_depth=feature_depth,
            )
        )
    return samples


def _estimate(config: ScenarioConfig, vio: list, odometry: list,
              range_samples: list, ground_truth=None) -> SimulatedRun:
    n = len(vio)
    dt = config.dt
    n_steps = len(vio[0]) - 1
    for traj in vio[1:]:
        if len(traj) != n_steps + 1:
            raise ValueError("all VIO trajectories must share the same step grid")
    pp = config.pipeline
    zeta = pp.zeta if pp.zeta is not None else default_zeta(n)
    spacing_steps = max(int(round(pp.min_anchor_spacing / dt)), 1)

    bank = RangeFilterBank(
        n,
        ma_window=pp.ma_window,
        ransac_window=pp.ransac_window,
        threshold=pp.ransac_threshold,
        min_samples=pp.ransac_min_samples,
        iterations=pp.ransac_iterations,
        seed=config.seed,
    )
    if range_samples:
        for sample in range_samples[0]:
            bank.push(sample)

    # raw VIO increments per robot and step
    increments = []
    for i in range(n):
        incs = [None]
        for t in range(1, n_steps + 1):
            incs.append(compose(inverse(vio[i].pose(t - 1)), vio[i].pose(t)))
        increments.append(incs)

    known = config.initial_pose_mode == "known"
    world = None
    chains = None  # scale-corrected local VIO chains, re-registered at anchors
    global_rotations = [[] for _ in range(n)]
    global_positions = [[] for _ in range(n)]
    prev_anchor_positions = None

    if known:
        if ground_truth is None:
            raise ValueError("known-initial mode needs ground-truth initial poses")
        initials = initialize_world("known",
                                    gt_initials=[g.pose(0) for g in ground_truth])
        world = WorldState(initials)
        world.append_step(0, initials)
        chains = [RigidPose.identity() for _ in range(n)]
        for i in range(n):
            global_rotations[i].append(initials[i].rotation)
            global_positions[i].append(initials[i].translation.copy())
        prev_anchor_positions = np.stack([p.translation for p in initials])

    scale_states = [ScaleState.initial() for _ in range(n)]
    scale_evidence = np.zeros(n)  # armed out-of-band log readings (debounce)
    gauge_ref = {"cloud": None}  # odometry-propagated gauge reference
    range_sets = []
    anchors = []
    weight_sets = []
    scale_history = []
    structure_warm = None
    last_anchor_step = 0
    epoch = 0
    flags = {
        "initialized_at": 0 if known else None,
        "diverged_steps": [],
        "structure_failures": 0,
        "structure_rejections": 0,
        "mirror_picks": 0,
    }

    for t in range(1, n_steps + 1):
        if t < len(range_samples):
            for sample in range_samples[t]:
                bank.push(sample)
        ranges = bank.range_set(t)
        range_sets.append(ranges)

        if world is not None:
            # scale-corrected increments extend the corrected chains
            warm = []
            for i in range(n):
                inc = increments[i][t]
                dp = inc.translation
                if pp.scale_feedback_frame == "world":
                    R_w = world.current[i].rotation
                    dp = R_w.T @ apply_scale_feedback(R_w @ dp, scale_states[i])
                else:
                    dp = apply_scale_feedback(dp, scale_states[i])
                inc_corrected = RigidPose(inc.rotation, dp)
                chains[i] = compose(chains[i], inc_corrected)
                warm.append(compose(world.current[i], inc_corrected))
            try:
                poses = optimize_step(
                    warm, ranges, chains, world.initials,
                    lambda_range=pp.lambda_range, lambda_vio=pp.lambda_vio,
                    max_iterations=pp.max_gn_iterations,
                )
            except RuntimeError:
                poses = warm
                flags["diverged_steps"].append(t)
            world.append_step(t, poses)
            for i in range(n):
                global_rotations[i].append(poses[i].rotation)
                global_positions[i].append(poses[i].translation.copy())
        elif t * dt > pp.startup_window:
            raise RuntimeError("initialization failed")

        # Structure attempts are spacing-gated so every scale-feedback epoch
        # accumulates a displacement baseline much larger than the range
        # noise; an epoch fired after a fraction of a second would divide
        # two centimetre-scale deltas and poison the scale states.  Only an
        # uninitialized run (unknown start) may trigger immediately.
        due = world is None or (t - last_anchor_step) >= spacing_steps
        if ranges.all_valid and due:
            estimate = None
            try:
                estimate = estimate_structure(ranges, init=structure_warm)
            except (ValueError, RuntimeError):
                flags["structure_failures"] += 1
            if estimate is not None and accept_structure(estimate, zeta):
                structure_warm = estimate.positions
                if world is None:
                    # unknown-initial bootstrap: anchor the world at the
                    # first accepted structure, backfill by dead reckoning
                    initials = initialize_world(
                        "unknown", structure=estimate,
                        vio_at_structure=[vio[i].pose(t) for i in range(n)],
                    )
                    world = WorldState(initials)
                    chains = [vio[i].pose(t) for i in range(n)]
                    for s in range(0, t + 1):
                        poses = [compose(initials[i], vio[i].pose(s))
                                 for i in range(n)]
                        world.append_step(s, poses)
                        for i in range(n):
                            global_rotations[i].append(poses[i].rotation)
                            global_positions[i].append(poses[i].translation.copy())
                    prev_anchor_positions = world.positions_at(0)
                    flags["initialized_at"] = t
                epoch += 1
                _run_anchor_epoch(
                    config, world, chains, odometry, estimate, epoch,
                    last_anchor_step, t, spacing_steps,
                    prev_anchor_positions, scale_states, scale_evidence,
                    gauge_ref, anchors, weight_sets, scale_history, flags,
                )
                prev_anchor_positions = anchors[-1].anchors
                last_anchor_step = t
            elif estimate is not None:
                flags["structure_rejections"] += 1
                structure_warm = estimate.positions

    if world is None:
        raise RuntimeError("initialization failed")

    corrected = [world.trajectory(i, dt) for i in range(n)]
    glob = [
        Trajectory(np.asarray(world.steps), np.stack(global_rotations[i]),
                   np.stack(global_positions[i]), dt)
        for i in range(n)
    ]
    return SimulatedRun(
        config=config,
        ground_truth=ground_truth,
        vio=vio,
        odometry=odometry,
        range_samples=list(range_samples),
        range_sets=range_sets,
        world=world,
        global_trajectories=glob,
        corrected_trajectories=corrected,
        anchors=anchors,
        weight_sets=weight_sets,
        scale_states=scale_states,
        scale_history=scale_history,
        flags=flags,
    )


# Per-epoch retention of the gauge reference cloud: the fraction of the
# reference kept before it leaks toward the committed anchors. Memory of
# roughly 1/(1 - rho) epochs of odometry evidence shapes the gauge fit.
_GAUGE_MEMORY = 0.8


def _reference_gauge(anchor_set, estimate, ref, prev_anchors, chain_world, gain):
    """Steer the anchor gauge by accumulated dead reckoning.

    Pairwise ranges say nothing about the constellation's absolute
    rotation or translation, so the gauge of a fitted anchor set is just
    the estimate cloud's own gauge re-measured through the alignment,
    plus fit noise. Because every correction re-registers the dead
    reckoning at the anchors, each epoch's gauge noise would otherwise be
    locked in: the world frame would random-walk at the alignment's
    per-epoch error. Worse, re-registration also wipes the evidence that
    could repair an already-wrong gauge (an unknown-start world boots
    with an arbitrary structure-frame rotation): after a reset, one epoch
    of odometry barely distinguishes a rotated frame from a true one.

    So a reference cloud is kept across epochs: it advances by each
    epoch's scale-corrected odometry displacements and only leaks slowly
    toward the committed anchors. Fitting the structure's shape onto
    that cloud (robustly reweighted, so one inconsistent robot cannot
    torque the fit) recovers the gauge that best explains several epochs
    of odometry at once; a wrong frame shows up as a coherent twist
    between the cloud and the shape and is steered out within a few
    epochs, while the fit noise of any single alignment is averaged
    away. `gain` is the fraction of the per-epoch fitted gauge kept:
    1 disables the reference, 0 trusts it alone.
    """
    if ref["cloud"] is None:
        ref["cloud"] = np.array(prev_anchors, dtype=float)
    cloud = ref["cloud"] + (chain_world - prev_anchors)
    shape = estimate.mirror_positions if anchor_set.mirrored else estimate.positions
    w = np.ones(anchor_set.n)
    try:
        for _ in range(2):
            pose, _ = weighted_align(cloud, shape, w)
            resid = np.linalg.norm(cloud - pose.apply(shape), axis=1)
            w = 1.0 / (resid + 0.1)
        predicted = pose.apply(shape)
        delta, _ = weighted_align(predicted, anchor_set.anchors, w)
    except ValueError:
        ref["cloud"] = cloud
        return anchor_set  # degenerate fit: keep the measured gauge
    frac = 1.0 - gain
    R = so3_exp(frac * so3_log(delta.rotation))
    c = (w / w.sum()) @ anchor_set.anchors
    shift = c - R @ c + frac * (delta.apply(c) - c)
    partial = RigidPose(R, shift)
    fused = partial.apply(anchor_set.anchors)
    ref["cloud"] = _GAUGE_MEMORY * cloud + (1.0 - _GAUGE_MEMORY) * fused
    return replace(anchor_set, anchors=fused,
                   transform=compose(partial, anchor_set.transform))


def _isotropic_factors(raw, baselines, eps_motion, s_min, s_max) -> np.ndarray:
    """Collapse per-axis scale quotients into one robust factor per robot.

    Two failure modes of the raw per-axis quotients are handled here. The
    first is noise: an axis that only swept a few decimeters during the
    epoch divides two numbers of the same size as the anchor noise, and
    because every epoch's correction re-registers the dead reckoning, any
    noise written into a scale state rotates the whole constellation's
    fitted gauge permanently. Combining the axes with weights proportional
    to the squared displacement baseline makes the axis with real motion
    (and percent-level noise) dominate, which is also physically right: a
    visual-inertial scale error is a property of the depth estimate, not
    of a world direction. The second is common-mode error: the gauge part
    of the anchors is set only by the VIO consensus -- ranges are internal
    to the constellation -- so a shared anchor rotation or translation
    enters every robot's quotient identically, carries no information
    about any single robot, and would otherwise be accumulated forever.
    Dividing by the median across robots removes it each epoch while
    leaving a faulty robot's relative deviation in place (with fewer than
    three robots a median cannot out-vote an outlier, so the factors are
    only clamped).

    Returns an (n, 3) array with each robot's three axes equal.
    """
    raw = np.asarray(raw, dtype=float)
    n = raw.shape[0]
    b2 = np.square(np.asarray(baselines, dtype=float))
    b2[np.sqrt(b2) < eps_motion] = 0.0
    logs = np.zeros(n)
    informative = b2.sum(axis=1) > 0.0
    for i in np.flatnonzero(informative):
        logs[i] = np.dot(b2[i], np.log(raw[i])) / b2[i].sum()
    if np.count_nonzero(informative) >= 3:
        logs[informative] -= np.median(logs[informative])
    factors = np.clip(np.exp(logs), s_min, s_max)
    return np.repeat(factors[:, None], 3, axis=1)


def _run_anchor_epoch(config, world, chains, odometry, estimate, epoch,
                      e0, t, spacing_steps, prev_anchor_positions,
                      scale_states, scale_evidence, gauge_ref, anchors,
                      weight_sets, scale_history, flags) -> None:
    """Weights, alignment, correction, and scale update for one epoch."""
    n = world.n
    pp = config.pipeline
    epoch_world = np.stack([world.positions_at(idx) for idx in range(e0 + 1, t + 1)])
    structure_dist = estimate.distances

    w_v = np.empty(n)
    w_a = np.empty(n)
    w_r = np.empty(n)
    for i in range(n):
        samples = odometry[i][e0 + 1 : t + 1]
        w_v[i] = velocity_weight(samples, config.dt)
        w_a[i] = rotation_weight(samples, config.camera, config.dt)
        w_r[i] = consistency_weight(epoch_world, structure_dist, i, eps=pp.epsilon)
    weights = normalize_and_total(w_v, w_a, w_r, epoch=epoch, step=t)

    anchor_set = select_mirror(estimate, world.positions_at(t), weights.total,
                               epoch=epoch)
    if anchor_set.mirrored:
        flags["mirror_picks"] += 1

    # Corrected dead-reckoned positions at the epoch's end, used both for
    # the gauge transport and as the scale quotient's denominator.
    chain_world = np.stack([
        world.initials[i].rotation @ chains[i].translation
        + world.initials[i].translation
        for i in range(n)
    ])
    if pp.gauge_gain < 1.0:
        anchor_set = _reference_gauge(anchor_set, estimate, gauge_ref,
                                      prev_anchor_positions, chain_world,
                                      pp.gauge_gain)

    # A truncated epoch (only the unknown-start bootstrap produces one) has
    # too little motion for a trustworthy per-axis displacement quotient, so
    # the scale states are left alone and only the positions are corrected.
    update_scales = (t - e0) >= spacing_steps

    if update_scales:
        # The displacement quotient compares the anchored displacement with
        # the corrected dead reckoning over the same epoch. The chain is
        # used for the denominator (rather than the optimized estimate)
        # because the chain is exactly the signal the scale state corrects;
        # the optimizer's range term drags a faulty robot's estimate partway
        # back toward the constellation, which would mask most of its scale
        # error. The previous anchor doubles as the chain's epoch-start
        # position: re-registration pinned them together.
        raw = np.stack([
            scale_error(prev_anchor_positions[i], anchor_set.anchors[i],
                        prev_anchor_positions[i], chain_world[i],
                        eps_motion=pp.eps_motion, s_min=pp.scale_min,
                        s_max=pp.scale_max)
            for i in range(n)
        ])
        factors = _isotropic_factors(raw, np.abs(chain_world
                                                 - prev_anchor_positions),
                                     pp.eps_motion, pp.scale_min, pp.scale_max)
        if pp.scale_deadband > 0.0:
            # Factors within the noise floor of 1 carry no evidence, and a
            # multiplicative state hit with noise every epoch would drift
            # (the log of a noisy quotient is biased negative). A single
            # out-of-band reading is not trusted either: anchor noise blips
            # change sign from epoch to epoch, while a real odometry error
            # keeps reporting the same direction, so an update fires only
            # when two consecutive epochs agree.
            logs = np.log(factors[:, 0])
            fire = np.zeros(n, dtype=bool)
            for i in range(n):
                if abs(logs[i]) < pp.scale_deadband:
                    scale_evidence[i] = 0.0
                    continue
                fire[i] = scale_evidence[i] * logs[i] > 0.0
                scale_evidence[i] = logs[i]
            factors = np.where(fire[:, None], factors, 1.0)
        for i in range(n):
            scale_states[i] = update_scale_state(
                scale_states[i], factors[i], s_min=pp.scale_min,
                s_max=pp.scale_max, epoch=epoch,
            )

    for i in range(n):
        nodes = world.position_history(i, e0, t)
        batch = correct_epoch(nodes, anchor_set.anchors[i], robot=i, epoch=epoch)
        world.overwrite_positions(i, e0, batch.after)
        world.set_current_position(i, anchor_set.anchors[i])
        # Re-register the local chain so dead reckoning resumes from the
        # corrected position; accumulated error is evacuated rather than
        # left to fight the anchors in every later optimization step.
        R0 = world.initials[i].rotation
        t0 = world.initials[i].translation
        chains[i] = RigidPose(chains[i].rotation,
                              R0.T @ (anchor_set.anchors[i] - t0))

    anchors.append(anchor_set)
    weight_sets.append(weights)
    scale_history.append(np.stack([s.factors for s in scale_states]))


def write_run(run: SimulatedRun, out_dir) -> None:
    """Write the run directory: CSV trajectories, raw ranges, anchors,
    weights, resolved config, and (when truth is known) metrics.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = run.n_robots
    dt = run.config.dt
    vio_world = []
    for i in range(n):
        rid = i + 1
        w = run.vio_world_trajectory(i)
        vio_world.append(w)
        w.write_csv(out / f"vio_{rid}.csv")
        run.corrected_trajectories[i].write_csv(out / f"corrected_{rid}.csv")
        run.global_trajectories[i].write_csv(out / f"global_{rid}.csv")
        if run.ground_truth is not None:
            run.ground_truth[i].write_csv(out / f"gt_{rid}.csv")

    write_ranges_csv(run.range_samples, out / "ranges.csv")

    with open(out / "anchors.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "t", "robot", "x", "y", "z",
                         "mirrored", "cost", "cost_rejected"])
        for aset in run.anchors:
            for i in range(n):
                writer.writerow(
                    [aset.epoch, aset.step, _g(aset.step * dt), i + 1]
                    + [_g(v) for v in aset.anchors[i]]
                    + [int(aset.mirrored), _g(aset.cost), _g(aset.cost_rejected)]
                )

    with open(out / "weights.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "t", "robot", "w_v", "w_a", "w_r",
                         "wv_norm", "wa_norm", "wr_norm", "total"])
        for ws in run.weight_sets:
            for i in range(n):
                writer.writerow(
                    [ws.epoch, ws.step, _g(ws.step * dt), i + 1]
                    + [_g(v) for v in (ws.w_v[i], ws.w_a[i], ws.w_r[i],
                                       ws.wv_norm[i], ws.wa_norm[i],
                                       ws.wr_norm[i], ws.total[i])]
                )

    save_config(run.config, out / "config.yaml")
    if run.ground_truth is not None:
        report = evaluate_mod.build_report(
            run.ground_truth, vio_world, run.corrected_trajectories,
            run.global_trajectories, seed=run.config.seed,
        )
        evaluate_mod.write_metrics(report, out / "metrics.json")


def write_ranges_csv(samples_by_step, path) -> None:
    """Raw range log, one row per measurement: step,i,j,distance (1-based ids)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "i", "j", "distance"])
        for samples in samples_by_step:
            for s in samples:
                writer.writerow([s.step, s.i + 1, s.j + 1, _g(s.distance)])


def read_ranges_csv(path) -> list:
    """Inverse of write_ranges_csv; returns per-step lists of RawRange."""
    by_step = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != [
            "step", "i", "j", "distance"
        ]:
            raise ValueError(f"bad range CSV header in {path}")
        for row in reader:
            step = int(row["step"])
            sample = RawRange(int(row["i"]) - 1, int(row["j"]) - 1, step,
                              float(row["distance"]))
            by_step.setdefault(step, []).append(sample)
    if not by_step:
        return []
    last = max(by_step)
    return [by_step.get(s, []) for s in range(0, last + 1)]


def _g(value) -> str:
    return format(float(value), ".17g")
