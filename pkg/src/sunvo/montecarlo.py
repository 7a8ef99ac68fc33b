"""Paired Monte Carlo comparison of sun-measurement modes.

Each trial generates one synthetic world (tracks, ground truth, injected
heading drift) and runs every configured mode on that identical input, so
mode-to-mode differences isolate the effect of the sun measurements.  Trial
seeds derive deterministically from the master seed; given the same config
the emitted CSV is byte-identical across runs and worker counts.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .config import ExperimentConfig, InitialPoseConfig, RunConfig, SyntheticSettings
from .metrics import TrajectoryMetrics, evaluate
from .pipeline import PipelineAbort, Trajectory, run_with_stats
from .sun import EphemerisQuery, solar_ephemeris
from .tracks import SyntheticWorldConfig, TrajectorySegment, generate_synthetic

__all__ = [
    "CSV_COLUMNS",
    "monte_carlo",
    "prediction_sun_world",
    "synthetic_world_config",
    "trial_seed",
    "write_rows",
]

CSV_COLUMNS = (
    "kind",
    "trial",
    "mode",
    "status",
    "trans_armse_m",
    "trans_armse_en_m",
    "rot_armse_rad",
    "final_drift_m",
    "final_drift_pct",
    "final_drift_en_m",
    "final_drift_en_pct",
)

_METRIC_FIELDS = CSV_COLUMNS[4:]


def trial_seed(master_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1)[0])


def synthetic_world_config(
    settings: SyntheticSettings, seed: int, sun_world: np.ndarray | None
) -> SyntheticWorldConfig:
    return SyntheticWorldConfig(
        segments=tuple(
            TrajectorySegment(s.frames, s.step_m, s.yaw_rate_deg) for s in settings.segments
        ),
        n_landmarks=settings.n_landmarks,
        depth_range=settings.depth_range,
        pixel_noise=settings.pixel_noise,
        outlier_fraction=settings.outlier_fraction,
        sun_world=sun_world,
        seed=seed,
        track_length=settings.track_length,
        start_heading_deg=settings.start_heading_deg,
        start_position=settings.start_position,
    )


def prediction_sun_world(run: RunConfig) -> np.ndarray:
    """The world sun direction the pipeline will predict with."""
    if run.sun.world_direction is not None:
        v = np.asarray(run.sun.world_direction, dtype=float)
        return v / np.linalg.norm(v)
    q = EphemerisQuery(run.ephemeris.lat, run.ephemeris.lon, run.ephemeris.t0)
    return solar_ephemeris(q)


def _trial_anchor(run: RunConfig, synthetic: SyntheticSettings) -> InitialPoseConfig:
    """Anchor at the synthetic start unless the user pinned initial_pose."""
    if run.initial_pose.explicit:
        return run.initial_pose
    return InitialPoseConfig(
        position=synthetic.start_position,
        heading_deg=synthetic.start_heading_deg,
    )


def _metric_values(metrics: TrajectoryMetrics) -> dict[str, float]:
    return {
        "trans_armse_m": metrics.trans_armse_m,
        "trans_armse_en_m": metrics.trans_armse_en_m,
        "rot_armse_rad": metrics.rot_armse_rad,
        "final_drift_m": metrics.final_drift_m,
        "final_drift_pct": metrics.final_drift_pct,
        "final_drift_en_m": metrics.final_drift_en_m,
        "final_drift_en_pct": metrics.final_drift_en_pct,
    }


def _run_trial(cfg: ExperimentConfig, trial: int) -> list[dict]:
    run_base = cfg.run
    seed = trial_seed(run_base.seed, trial)
    sun_world = prediction_sun_world(run_base)
    world = synthetic_world_config(cfg.synthetic, seed, sun_world)
    table = generate_synthetic(world, run_base.intrinsics)

    anchor = _trial_anchor(run_base, cfg.synthetic)
    t0 = run_base.ephemeris.t0
    timestamps = tuple(t0 + f / run_base.frame_rate_hz for f in range(table.n_frames))
    truth = Trajectory(tuple(table.truth_poses), timestamps)

    rows = []
    for mode in cfg.montecarlo.modes:
        run_cfg = replace(
            run_base,
            seed=seed,
            initial_pose=anchor,
            sun=replace(run_base.sun, source=mode.source, prior=mode.prior),
        )
        row = {"kind": "trial", "trial": str(trial), "mode": mode.name}
        try:
            est, _ = run_with_stats(run_cfg, table)
            metrics = evaluate(est, truth)
            row["status"] = "ok"
            row.update({k: _fmt(v) for k, v in _metric_values(metrics).items()})
        except PipelineAbort as exc:
            row["status"] = "abort"
            row["abort_reason"] = str(exc)
            row.update({k: "" for k in _METRIC_FIELDS})
        rows.append(row)
    return rows


def _fmt(v: float) -> str:
    return "%.12g" % v


def _aggregate_rows(trial_rows: list[dict], modes) -> list[dict]:
    out = []
    for mode in modes:
        ok = [
            r
            for r in trial_rows
            if r["mode"] == mode.name and r["status"] == "ok"
        ]
        n_total = sum(1 for r in trial_rows if r["mode"] == mode.name)
        status = f"{len(ok)}/{n_total}"
        for kind in ("median", "iqr"):
            row = {"kind": kind, "trial": "", "mode": mode.name, "status": status}
            for f in _METRIC_FIELDS:
                if not ok:
                    row[f] = ""
                    continue
                vals = np.array([float(r[f]) for r in ok])
                if kind == "median":
                    row[f] = _fmt(float(np.median(vals)))
                else:
                    q75, q25 = np.percentile(vals, [75.0, 25.0])
                    row[f] = _fmt(float(q75 - q25))
            out.append(row)
    return out


def monte_carlo(cfg: ExperimentConfig, out_path=None) -> list[dict]:
    """Run the paired study; returns all CSV rows (trials then aggregates).

    pre: cfg.synthetic and cfg.montecarlo are present
    post: identical config -> identical rows, independent of worker count
    """
    if cfg.synthetic is None:
        raise ValueError("monte_carlo needs a 'synthetic' config section")
    if cfg.montecarlo is None:
        raise ValueError("monte_carlo needs a 'montecarlo' config section")
    mc = cfg.montecarlo

    trial_rows: list[dict] = []
    if mc.workers > 1 and mc.trials > 1:
        with ProcessPoolExecutor(max_workers=mc.workers) as pool:
            for rows in pool.map(_run_trial, [cfg] * mc.trials, range(mc.trials)):
                trial_rows.extend(rows)
    else:
        for trial in range(mc.trials):
            trial_rows.extend(_run_trial(cfg, trial))

    all_rows = trial_rows + _aggregate_rows(trial_rows, mc.modes)
    if out_path is not None:
        write_rows(all_rows, out_path)
    return all_rows


def write_rows(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([row.get(c, "") for c in CSV_COLUMNS])
