"""Command-line interface.

Subcommands:
  simulate    generate a synthetic track table (+ truth, + oracle detections)
  run         run the VO pipeline on a track table, write the trajectory
  eval        compare an estimated trajectory against ground truth
  montecarlo  paired multi-trial comparison of sun modes

Exit codes: 0 success, 2 configuration or file-format error, 3 pipeline abort.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .metrics import evaluate
from .montecarlo import monte_carlo, prediction_sun_world, synthetic_world_config
from .pipeline import PipelineAbort, Trajectory, run_with_stats
from .solver import SolverSingularError
from .sun import oracle_measurement
from .tracks import (
    InfeasibleSceneError,
    TrackFileError,
    generate_synthetic,
    load_tracks,
    save_sun_detections,
    save_tracks,
)
from .trajio import TrajectoryFileError, load_trajectory, save_trajectory

__all__ = ["main"]

_SUN_MODES = ("off", "oracle", "bimodal", "file")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    run = cfg.run
    if getattr(args, "seed", None) is not None:
        run = replace(run, seed=args.seed)
    sun_overrides = {}
    if getattr(args, "sun_mode", None) is not None:
        sun_overrides["source"] = args.sun_mode
    if getattr(args, "detections", None) is not None:
        sun_overrides["detections_path"] = args.detections
    if sun_overrides:
        # one replace so source="file" sees the detections path it arrived with
        run = replace(run, sun=replace(run.sun, **sun_overrides))
    if getattr(args, "tracks", None) is not None:
        run = replace(run, tracks_path=args.tracks)
    mc = cfg.montecarlo
    if getattr(args, "trials", None) is not None and mc is not None:
        mc = replace(mc, trials=args.trials)
    if getattr(args, "workers", None) is not None and mc is not None:
        mc = replace(mc, workers=args.workers)
    return ExperimentConfig(run=run, synthetic=cfg.synthetic, montecarlo=mc)


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _truth_trajectory(cfg: ExperimentConfig, table) -> Trajectory:
    t0 = cfg.run.ephemeris.t0
    stamps = tuple(t0 + f / cfg.run.frame_rate_hz for f in range(table.n_frames))
    return Trajectory(tuple(table.truth_poses), stamps)


def _build_synthetic(cfg: ExperimentConfig):
    if cfg.synthetic is None:
        raise ConfigError("this command needs a 'synthetic' config section")
    sun_world = prediction_sun_world(cfg.run) if cfg.run.sun.source != "off" else None
    world = synthetic_world_config(cfg.synthetic, cfg.run.seed, sun_world)
    return generate_synthetic(world, cfg.run.intrinsics), sun_world


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    table, sun_world = _build_synthetic(cfg)

    tracks_path = os.path.join(out, "tracks.txt")
    truth_path = os.path.join(out, "truth.txt")
    save_tracks(table, tracks_path)
    save_trajectory(_truth_trajectory(cfg, table), truth_path)
    print(f"wrote {table.n_observations()} observations over {table.n_frames} frames "
          f"to {tracks_path}")
    print(f"wrote ground truth to {truth_path}")

    if cfg.run.sun.source == "oracle":
        sun = cfg.run.sun
        sigma = math.radians(sun.sigma_deg)
        detections = []
        for f in range(1, table.n_frames):
            if f % sun.cadence != 0:
                continue
            rng = np.random.default_rng(np.random.SeedSequence([cfg.run.seed, 333, f]))
            detections.append(
                (f, oracle_measurement(table.truth_poses[f], sun_world, sigma, rng, f))
            )
        det_path = os.path.join(out, "detections.txt")
        save_sun_detections(detections, det_path)
        print(f"wrote {len(detections)} sun detections to {det_path}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    if cfg.run.tracks_path is not None:
        table = load_tracks(cfg.run.tracks_path)
    else:
        table, _ = _build_synthetic(cfg)

    trajectory, stats = run_with_stats(cfg.run, table)
    traj_path = os.path.join(out, "trajectory.txt")
    save_trajectory(trajectory, traj_path)
    print(f"frames {len(trajectory)}  windows {stats.windows}  "
          f"solver iterations {stats.solver_iterations}")
    if cfg.run.sun.source != "off":
        reasons = ", ".join(f"{k}={v}" for k, v in sorted(stats.reject_reasons.items()))
        print(f"sun measurements: generated {stats.sun_generated}  "
              f"accepted {stats.sun_accepted}  rejected {stats.sun_rejected}"
              + (f"  ({reasons})" if reasons else ""))
    print(f"wrote trajectory to {traj_path}")
    return 0


def _cmd_eval(args) -> int:
    est = load_trajectory(args.est)
    truth = load_trajectory(args.truth)
    metrics = evaluate(est, truth)
    fields = [
        ("trans_armse_m", metrics.trans_armse_m),
        ("trans_armse_en_m", metrics.trans_armse_en_m),
        ("rot_armse_rad", metrics.rot_armse_rad),
        ("final_drift_m", metrics.final_drift_m),
        ("final_drift_pct", metrics.final_drift_pct),
        ("final_drift_en_m", metrics.final_drift_en_m),
        ("final_drift_en_pct", metrics.final_drift_en_pct),
    ]
    for name, value in fields:
        print(f"{name} = {value:.12g}")
    if args.out is not None:
        out = _outdir(args)
        path = os.path.join(out, "metrics.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(",".join(name for name, _ in fields) + "\n")
            f.write(",".join("%.12g" % value for _, value in fields) + "\n")
        print(f"wrote metrics to {path}")
    return 0


def _cmd_montecarlo(args) -> int:
    cfg = _load(args)
    if cfg.montecarlo is None:
        raise ConfigError("this command needs a 'montecarlo' config section")
    out = _outdir(args)
    path = os.path.join(out, "results.csv")
    rows = monte_carlo(cfg, path)
    print(f"wrote {len(rows)} rows to {path}")
    for row in rows:
        if row["kind"] != "median":
            continue
        print(f"mode {row['mode']} [{row['status']} ok]: "
              f"median trans ARMSE {row['trans_armse_m'] or 'n/a'} m, "
              f"median rot ARMSE {row['rot_armse_rad'] or 'n/a'} rad, "
              f"median final drift {row['final_drift_pct'] or 'n/a'} %")
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sunvo",
        description="Stereo visual odometry with sun-direction drift correction.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate synthetic tracks and ground truth")
    sim.add_argument("--config", required=True, help="JSON config path")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, help="override config seed")
    sim.set_defaults(func=_cmd_simulate)

    runp = sub.add_parser("run", help="run the VO pipeline")
    runp.add_argument("--config", required=True, help="JSON config path")
    runp.add_argument("--out", required=True, help="output directory")
    runp.add_argument("--seed", type=int, help="override config seed")
    runp.add_argument("--sun-mode", choices=_SUN_MODES, dest="sun_mode",
                      help="override sun.source")
    runp.add_argument("--tracks", help="track table path (overrides config)")
    runp.add_argument("--detections", help="sun detections path (overrides config)")
    runp.set_defaults(func=_cmd_run)

    ev = sub.add_parser("eval", help="compare trajectories")
    ev.add_argument("--est", required=True, help="estimated trajectory path")
    ev.add_argument("--truth", required=True, help="ground-truth trajectory path")
    ev.add_argument("--out", help="optional directory for metrics.csv")
    ev.set_defaults(func=_cmd_eval)

    mc = sub.add_parser("montecarlo", help="paired multi-trial study")
    mc.add_argument("--config", required=True, help="JSON config path")
    mc.add_argument("--out", required=True, help="output directory")
    mc.add_argument("--seed", type=int, help="override config seed")
    mc.add_argument("--trials", type=int, help="override montecarlo.trials")
    mc.add_argument("--workers", type=int, help="override montecarlo.workers")
    mc.set_defaults(func=_cmd_montecarlo)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineAbort as exc:
        print(f"error: pipeline abort: {exc}", file=sys.stderr)
        return 3
    except (InfeasibleSceneError, SolverSingularError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, TrackFileError, TrajectoryFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
