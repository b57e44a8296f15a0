"""Command-line front end.

Subcommands:
  simulate <config> --out <dir> [--seed S]   run a scenario, write a run directory
  evaluate <dir> [--align initial|full]      recompute metrics for a run directory
  sweep <config> --param path=v1,v2,...      grid over one config parameter
  replay <ranges.csv> <odom_dir> --out <dir> run the estimator on recorded logs
"""

import argparse
import sys
from pathlib import Path

import yaml

from . import evaluate as evaluate_mod
from .config import ScenarioConfig, load_config, override_config
from .geometry import Trajectory
from .pipeline import read_ranges_csv, run_pipeline, run_replay, write_run


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmloc",
        description="range-aided multi-robot localization pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write outputs")
    p.add_argument("config", help="scenario config file (YAML)")
    p.add_argument("--out", required=True, help="run directory to write")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="recompute metrics for a run directory")
    p.add_argument("run_dir", help="directory written by simulate")
    p.add_argument("--align", choices=("initial", "full"), default="initial",
                   help="trajectory alignment (full is diagnostic-only)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="grid over one config parameter")
    p.add_argument("config", help="scenario config file (YAML)")
    p.add_argument("--param", required=True, metavar="PATH=V1,V2,...",
                   help="dotted config path and comma-separated values")
    p.add_argument("--out", default=None, help="optional directory for per-value runs")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("replay", help="run the estimator on recorded logs")
    p.add_argument("ranges", help="raw range CSV (step,i,j,distance)")
    p.add_argument("odom_dir", help="directory holding vio_<robot>.csv logs")
    p.add_argument("--out", required=True, help="run directory to write")
    p.add_argument("--config", default=None, help="optional scenario config for parameters")
    p.add_argument("--dt", type=float, default=None,
                   help="step period when no config is given (default: infer)")
    p.set_defaults(func=_cmd_replay)
    return parser


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        data = override_config(config.to_dict(), "seed", int(args.seed))
        config = ScenarioConfig.from_dict(data)
    run = run_pipeline(config)
    write_run(run, args.out)
    report = evaluate_mod.evaluate_run(args.out)
    print(f"run written to {args.out}")
    print(evaluate_mod.format_table(report))
    return 0


def _cmd_evaluate(args) -> int:
    report = evaluate_mod.evaluate_run(args.run_dir, align=args.align)
    if args.align == "initial":
        evaluate_mod.write_metrics(report, Path(args.run_dir) / "metrics.json")
    else:
        print("full alignment (diagnostic; metrics.json untouched)")
    print(evaluate_mod.format_table(report))
    return 0


def _cmd_sweep(args) -> int:
    base = load_config(args.config).to_dict()
    path, sep, raw_values = args.param.partition("=")
    if not sep or not path or not raw_values:
        raise ValueError("--param expects PATH=V1,V2,...")
    values = [yaml.safe_load(v) for v in raw_values.split(",")]
    print(f"{'value':>12} {'ate_vio':>10} {'ate_corr':>10} {'ate_glob':>10}")
    for value in values:
        config = ScenarioConfig.from_dict(override_config(base, path, value))
        run = run_pipeline(config)
        vio_world = [run.vio_world_trajectory(i) for i in range(run.n_robots)]
        report = evaluate_mod.build_report(
            run.ground_truth, vio_world, run.corrected_trajectories,
            run.global_trajectories, seed=config.seed,
        )
        if args.out is not None:
            tag = f"{path.replace('.', '_')}_{value}"
            write_run(run, Path(args.out) / tag)
        avg = report.avg
        print(f"{value!s:>12} {avg['ate_vio']:>10.3f} "
              f"{avg['ate_corrected']:>10.3f} {avg['ate_global']:>10.3f}")
    return 0


def _cmd_replay(args) -> int:
    samples = read_ranges_csv(args.ranges)
    odom_dir = Path(args.odom_dir)
    vio_paths = {
        int(p.stem.split("_")[1]): p
        for p in odom_dir.glob("vio_*.csv")
    }
    if not vio_paths:
        raise ValueError(f"no vio_*.csv trajectories in {odom_dir}")
    ids = sorted(vio_paths)

    if args.config is not None:
        config = load_config(args.config)
        dt = config.dt
    else:
        dt = args.dt
        first = Trajectory.read_csv(vio_paths[ids[0]], dt=dt)
        dt = first.dt
        config = _replay_config(len(ids), dt, len(first) - 1)
    vio = [Trajectory.read_csv(vio_paths[rid], dt=dt) for rid in ids]

    ground_truth = None
    gt_paths = [odom_dir / f"gt_{rid}.csv" for rid in ids]
    if all(p.exists() for p in gt_paths):
        ground_truth = [Trajectory.read_csv(p, dt=dt) for p in gt_paths]

    run = run_replay(config, vio, samples, ground_truth=ground_truth)
    write_run(run, args.out)
    print(f"replayed {len(ids)} robots, {len(vio[0]) - 1} steps, "
          f"{len(run.anchors)} anchor epochs "
          f"(first structure at step {run.flags['initialized_at']})")
    if ground_truth is not None:
        report = evaluate_mod.evaluate_run(args.out)
        print(evaluate_mod.format_table(report))
    return 0


def _replay_config(n_robots: int, dt: float, n_steps: int) -> ScenarioConfig:
    """Minimal parameter set for replaying logs without a config file."""
    from .config import RobotConfig, TrajectorySpec, VioParams

    robots = [
        RobotConfig(TrajectorySpec("stationary", {}), VioParams())
        for _ in range(n_robots)
    ]
    return ScenarioConfig(
        robots=robots,
        dt=dt,
        duration=max(n_steps, 10) * dt,
        initial_pose_mode="unknown",
    )


if __name__ == "__main__":
    sys.exit(main())
